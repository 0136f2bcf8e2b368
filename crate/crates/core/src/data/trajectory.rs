use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::domain::SpaceTimeDomain;
use super::field::{parse_units_line, GroundTruthField};
use super::units::UnitSystem;
use crate::error::{Error, Result};

/// One probe sample of a vehicle trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub vehicle: u64,
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

/// Parses the trajectory CSV format: a units line, a `vehicle_id,t,x,v`
/// header, then one sample per line.
pub fn parse_trajectories(text: &str) -> Result<(UnitSystem, Vec<TrajectoryPoint>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (no, first) = lines.next().ok_or(Error::MissingUnits)?;
    let (units, _, _) = parse_units_line(first, no)?;
    let (no, header) = lines.next().ok_or(Error::Parse {
        line: no + 1,
        msg: "missing column header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["vehicle_id", "t", "x", "v"] {
        return Err(Error::Parse {
            line: no,
            msg: format!("expected header `vehicle_id,t,x,v`, got `{header}`"),
        });
    }
    let mut points = Vec::new();
    for (row, (no, line)) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: no,
                msg: format!("row {row}: expected 4 columns, got {}", parts.len()),
            });
        }
        let vehicle = parts[0].parse::<u64>().map_err(|_| Error::Parse {
            line: no,
            msg: format!("row {row}: bad vehicle id `{}`", parts[0]),
        })?;
        let mut vals = [0.0; 3];
        for (k, p) in parts[1..].iter().enumerate() {
            vals[k] = p
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: no,
                    msg: format!("row {row}: bad number `{p}`"),
                })?;
        }
        points.push(TrajectoryPoint {
            vehicle,
            t: vals[0],
            x: vals[1],
            v: vals[2],
        });
    }
    Ok((units, points))
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<(UnitSystem, Vec<TrajectoryPoint>)> {
    parse_trajectories(&std::fs::read_to_string(path)?)
}

pub fn format_trajectories(units: &UnitSystem, points: &[TrajectoryPoint]) -> String {
    let mut s = format!(
        "# units: length={}, speed={}, flow={}\nvehicle_id,t,x,v\n",
        units.length, units.speed, units.flow
    );
    for p in points {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", p.vehicle, p.t, p.x, p.v);
    }
    s
}

/// Edie aggregation of trajectories onto the cells of `domain`.
///
/// Cell `(i, j)` covers `[i dt, (i+1) dt) x [j dx, (j+1) dx)` and is stored at
/// row `i`, column `j` of the returned field. Trajectories are linear between
/// consecutive samples of the same vehicle.
pub fn aggregate_trajectories(
    points: &[TrajectoryPoint],
    domain: &SpaceTimeDomain,
) -> Result<GroundTruthField> {
    if points.is_empty() {
        return Err(Error::InsufficientData("empty trajectory set".into()));
    }
    let (nx, nt) = (domain.nx(), domain.nt());
    let (dx, dt) = (domain.dx, domain.dt);
    let mut vehicles: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        if !(0.0..=domain.length).contains(&p.x) || !(0.0..=domain.horizon).contains(&p.t) {
            return Err(Error::InvalidArgument(format!(
                "vehicle {} sample (t={}, x={}) lies outside the domain",
                p.vehicle, p.t, p.x
            )));
        }
        vehicles.entry(p.vehicle).or_default().push((p.t, p.x));
    }

    let mut dist = vec![0.0; nt * nx];
    let mut time = vec![0.0; nt * nx];
    let mut cuts = Vec::new();
    for (id, samples) in &vehicles {
        for w in samples.windows(2) {
            let ((ta, xa), (tb, xb)) = (w[0], w[1]);
            if tb < ta {
                return Err(Error::InvalidArgument(format!(
                    "vehicle {id} samples are not time-ordered at t={tb}"
                )));
            }
            if tb == ta {
                continue;
            }
            cuts.clear();
            cuts.push(0.0);
            let k0 = (ta / dt).floor() as i64 + 1;
            let mut k = k0;
            while (k as f64) * dt < tb {
                cuts.push((k as f64 * dt - ta) / (tb - ta));
                k += 1;
            }
            if xb != xa {
                let (lo, hi) = (xa.min(xb), xa.max(xb));
                let mut j = (lo / dx).floor() as i64 + 1;
                while (j as f64) * dx < hi {
                    cuts.push((j as f64 * dx - xa) / (xb - xa));
                    j += 1;
                }
            }
            cuts.push(1.0);
            cuts.sort_by(f64::total_cmp);
            for c in cuts.windows(2) {
                let (s0, s1) = (c[0], c[1]);
                if s1 <= s0 {
                    continue;
                }
                let sm = 0.5 * (s0 + s1);
                let tm = ta + sm * (tb - ta);
                let xm = xa + sm * (xb - xa);
                let i = ((tm / dt).floor() as usize).min(nt - 1);
                let j = ((xm / dx).floor() as usize).min(nx - 1);
                dist[i * nx + j] += (s1 - s0) * (xb - xa).abs();
                time[i * nx + j] += (s1 - s0) * (tb - ta);
            }
        }
    }

    let units = domain.units;
    let mut speed = vec![0.0; nt * nx];
    let mut flow = vec![0.0; nt * nx];
    for idx in 0..nt * nx {
        flow[idx] = dist[idx] / (dx * dt) / units.flow_to_base();
        if time[idx] > 0.0 {
            speed[idx] = dist[idx] / time[idx] / units.speed_to_base();
        }
    }
    for j in 0..nx {
        let occupied: Vec<usize> = (0..nt).filter(|&i| time[i * nx + j] > 0.0).collect();
        if occupied.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no vehicle ever occupies column {j}"
            )));
        }
        for i in 0..nt {
            if time[i * nx + j] > 0.0 {
                continue;
            }
            let nearest = occupied
                .iter()
                .copied()
                .min_by_key(|&k| (k.abs_diff(i), k))
                .expect("nonempty");
            speed[i * nx + j] = speed[nearest * nx + j];
        }
    }
    GroundTruthField::new(units, dx, dt, nt, nx, speed, flow)
}
