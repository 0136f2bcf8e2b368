use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::units::UnitSystem;
use crate::error::{Error, Result};

/// Dense speed and flow grids on a regular lattice.
///
/// Row `i` holds time `i * dt` (seconds from the start of the record) and
/// column `j` holds position `j * dx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthField {
    pub units: UnitSystem,
    pub dx: f64,
    pub dt: f64,
    rows: usize,
    cols: usize,
    speed: Vec<f64>,
    flow: Vec<f64>,
}

impl GroundTruthField {
    pub fn new(
        units: UnitSystem,
        dx: f64,
        dt: f64,
        rows: usize,
        cols: usize,
        speed: Vec<f64>,
        flow: Vec<f64>,
    ) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0 && dx.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid steps must be positive, got dx={dx}, dt={dt}"
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        for (name, v) in [("speed", &speed), ("flow", &flow)] {
            if v.len() != rows * cols {
                return Err(Error::ShapeMismatch {
                    op: "field",
                    lhs: vec![rows, cols],
                    rhs: vec![v.len()],
                });
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} grid holds invalid value {bad}"
                )));
            }
        }
        Ok(Self {
            units,
            dx,
            dt,
            rows,
            cols,
            speed,
            flow,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Distance from the first to the last column.
    pub fn length(&self) -> f64 {
        (self.cols - 1) as f64 * self.dx
    }

    /// Time from the first to the last row.
    pub fn horizon(&self) -> f64 {
        (self.rows - 1) as f64 * self.dt
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn flow(&self) -> &[f64] {
        &self.flow
    }

    pub fn speed_at(&self, row: usize, col: usize) -> f64 {
        self.speed[row * self.cols + col]
    }

    pub fn flow_at(&self, row: usize, col: usize) -> f64 {
        self.flow[row * self.cols + col]
    }

    /// Column index of a position that must sit on the lattice.
    pub fn column_of(&self, x: f64) -> Result<usize> {
        let j = (x / self.dx).round();
        if j < 0.0 || j as usize >= self.cols || (x - j * self.dx).abs() > 1e-9 * self.dx.max(x.abs()) {
            return Err(Error::OffGrid(x));
        }
        Ok(j as usize)
    }

    /// Row index of a time that must sit on the lattice.
    pub fn row_of(&self, t: f64) -> Result<usize> {
        let i = (t / self.dt).round();
        if i < 0.0 || i as usize >= self.rows || (t - i * self.dt).abs() > 1e-9 * self.dt.max(t.abs()) {
            return Err(Error::OffGrid(t));
        }
        Ok(i as usize)
    }

    /// Serializes to the Grid CSV text format.
    pub fn to_grid_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# units: length={}, speed={}, flow={}, dx={}, dt={}",
            self.units.length, self.units.speed, self.units.flow, self.dx, self.dt
        );
        for (tag, data) in [("@speed", &self.speed), ("@flow", &self.flow)] {
            s.push_str(tag);
            s.push('\n');
            for row in data.chunks(self.cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
        }
        s
    }

    /// Parses the Grid CSV text format.
    pub fn from_grid_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::MissingUnits)?;
        let header = parse_units_header(header, hline)?;

        let mut blocks: [Option<(Vec<f64>, usize, usize)>; 2] = [None, None];
        let mut current: Option<usize> = None;
        let mut row_in_block = 0usize;
        for (line_no, line) in lines {
            match line {
                "@speed" | "@flow" => {
                    let idx = usize::from(line == "@flow");
                    if blocks[idx].is_some() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("duplicate block {line}"),
                        });
                    }
                    blocks[idx] = Some((Vec::new(), 0, 0));
                    current = Some(idx);
                    row_in_block = 0;
                }
                _ if line.starts_with('#') => {}
                _ => {
                    let idx = current.ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: "data before any @speed/@flow block".into(),
                    })?;
                    let block = blocks[idx].as_mut().expect("block opened above");
                    let mut width = 0;
                    for token in line.split(',') {
                        let v: f64 = token.trim().parse().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("row {row_in_block}: unparseable token `{}`", token.trim()),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Parse {
                                line: line_no,
                                msg: format!("row {row_in_block}: non-finite value `{}`", token.trim()),
                            });
                        }
                        if v < 0.0 {
                            return Err(Error::Parse {
                                line: line_no,
                                msg: format!("row {row_in_block}: negative value {v}"),
                            });
                        }
                        block.0.push(v);
                        width += 1;
                    }
                    if block.1 == 0 {
                        block.2 = width;
                    } else if width != block.2 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!(
                                "row {row_in_block}: ragged row with {width} values, expected {}",
                                block.2
                            ),
                        });
                    }
                    block.1 += 1;
                    row_in_block += 1;
                }
            }
        }
        let [speed, flow] = blocks;
        let (speed, rows, cols) = speed.ok_or(Error::Parse {
            line: hline,
            msg: "missing @speed block".into(),
        })?;
        let (flow, frows, fcols) = flow.ok_or(Error::Parse {
            line: hline,
            msg: "missing @flow block".into(),
        })?;
        if (rows, cols) != (frows, fcols) {
            return Err(Error::ShapeMismatch {
                op: "grid csv",
                lhs: vec![rows, cols],
                rhs: vec![frows, fcols],
            });
        }
        Self::new(header.0, header.1, header.2, rows, cols, speed, flow)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_grid_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_grid_csv())?;
        Ok(())
    }
}

/// Parses `# units: length=.., speed=.., flow=..[, dx=.., dt=..]`.
///
/// Returns the unit system and the optional `dx`, `dt` entries (the grid
/// format requires them; the trajectory format does not).
pub(crate) fn parse_units_line(
    line: &str,
    line_no: usize,
) -> Result<(UnitSystem, Option<f64>, Option<f64>)> {
    let body = line
        .strip_prefix('#')
        .map(str::trim_start)
        .and_then(|l| l.strip_prefix("units:"))
        .ok_or(Error::MissingUnits)?;
    let (mut length, mut speed, mut flow, mut dx, mut dt) = (None, None, None, None, None);
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("malformed header entry `{part}`"),
        })?;
        let v = v.trim();
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x > 0.0)
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("bad step `{v}`"),
                })
        };
        match k.trim() {
            "length" => length = Some(v.parse()?),
            "speed" => speed = Some(v.parse()?),
            "flow" => flow = Some(v.parse()?),
            "dx" => dx = Some(num(v)?),
            "dt" => dt = Some(num(v)?),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown header key `{other}`"),
                })
            }
        }
    }
    match (length, speed, flow) {
        (Some(length), Some(speed), Some(flow)) => Ok((
            UnitSystem {
                length,
                speed,
                flow,
            },
            dx,
            dt,
        )),
        _ => Err(Error::MissingUnits),
    }
}

fn parse_units_header(line: &str, line_no: usize) -> Result<(UnitSystem, f64, f64)> {
    let (units, dx, dt) = parse_units_line(line, line_no)?;
    match (dx, dt) {
        (Some(dx), Some(dt)) => Ok((units, dx, dt)),
        _ => Err(Error::Parse {
            line: line_no,
            msg: "header lacks dx or dt".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "# units: length=ft, speed=ft/s, flow=veh/s, dx=20, dt=5
@speed
40,41,42
43,44,45
46,47,48
@flow
0.1,0.2,0.3
0.4,0.5,0.6
0.7,0.8,0.9
";

    #[test]
    fn well_formed_three_by_three() {
        let f = GroundTruthField::from_grid_csv(WELL_FORMED).unwrap();
        assert_eq!(f.speed().len(), 9);
        assert_eq!((f.rows(), f.cols()), (3, 3));
        assert_eq!(f.speed_at(1, 2), 45.0);
        assert_eq!(f.flow_at(2, 0), 0.7);
        assert_eq!(f.units, UnitSystem::NGSIM);
        assert_eq!((f.length(), f.horizon()), (40.0, 10.0));
    }

    #[test]
    fn missing_unit_tag() {
        let text = WELL_FORMED.replace("speed=ft/s, ", "");
        let err = GroundTruthField::from_grid_csv(&text).unwrap_err();
        assert_eq!(err.to_string(), "missing units");
        let err = GroundTruthField::from_grid_csv("@speed\n1\n@flow\n1\n").unwrap_err();
        assert_eq!(err.to_string(), "missing units");
    }

    #[test]
    fn nan_token_reports_row() {
        let text = WELL_FORMED.replace("43,44,45", "43,NaN,45");
        let err = GroundTruthField::from_grid_csv(&text).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("row 1"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_and_negative_rows_fail() {
        let text = WELL_FORMED.replace("43,44,45", "43,44");
        assert!(matches!(
            GroundTruthField::from_grid_csv(&text),
            Err(Error::Parse { .. })
        ));
        let text = WELL_FORMED.replace("0.4,0.5", "-0.4,0.5");
        assert!(matches!(
            GroundTruthField::from_grid_csv(&text),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let f = GroundTruthField::from_grid_csv(WELL_FORMED).unwrap();
        let back = GroundTruthField::from_grid_csv(&f.to_grid_csv()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn lattice_lookups() {
        let f = GroundTruthField::from_grid_csv(WELL_FORMED).unwrap();
        assert_eq!(f.column_of(40.0).unwrap(), 2);
        assert!(matches!(f.column_of(30.0), Err(Error::OffGrid(_))));
        assert!(f.column_of(60.0).is_err());
        assert_eq!(f.row_of(5.0).unwrap(), 1);
    }
}
