use serde::{Deserialize, Serialize};

use crate::data::UnitSystem;
use crate::error::{Error, Result};
use crate::physics::{FdParams, PhysicsOptions, PwConstants};

/// Which parts of the extended architecture are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    /// Convolutional branches; otherwise flatten + dense.
    pub cnn: bool,
    /// Expansion + gated-attention trunk; otherwise a plain dense stack on
    /// raw `(x, t)`.
    pub attention: bool,
    /// Learned per-segment diagrams; otherwise `fixed_fd` is used.
    pub param_net: bool,
}

impl Variant {
    pub const EXTENDED: Variant = Variant {
        cnn: true,
        attention: true,
        param_net: true,
    };
    pub const VANILLA: Variant = Variant {
        cnn: false,
        attention: false,
        param_net: false,
    };

    pub fn name(&self) -> &'static str {
        match *self {
            Variant::EXTENDED => "extended",
            Variant::VANILLA => "vanilla",
            _ => "custom",
        }
    }
}

impl Default for Variant {
    fn default() -> Self {
        Variant::EXTENDED
    }
}

/// `(min, max)` output range of each learned diagram component, in the
/// model's unit system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdRanges {
    pub v_f: [f64; 2],
    pub rho_c: [f64; 2],
    pub a: [f64; 2],
}

impl Default for FdRanges {
    fn default() -> Self {
        Self {
            v_f: [40.0, 160.0],
            rho_c: [0.01, 0.06],
            a: [FdParams::A_RANGE.0, FdParams::A_RANGE.1],
        }
    }
}

impl FdRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("v_f", self.v_f), ("rho_c", self.rho_c), ("a", self.a)] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Config(format!("range of {name} must satisfy 0 < min < max, got [{lo}, {hi}]")));
            }
        }
        let (alo, ahi) = FdParams::A_RANGE;
        if self.a[0] < alo || self.a[1] > ahi {
            return Err(Error::Config(format!("range of a must lie within [{alo}, {ahi}]")));
        }
        Ok(())
    }

    pub(crate) fn as_rows(&self) -> [[f64; 2]; 3] {
        [self.v_f, self.rho_c, self.a]
    }
}

/// Shape and options of an operator model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Features shared by branch and trunk outputs.
    pub k: usize,
    /// Rows `H` of a measurement window.
    pub window: usize,
    /// Input sensors `W`.
    pub sensors: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Hidden widths of the dense head after the convolutions (or after
    /// flattening when `variant.cnn` is off).
    pub head: Vec<usize>,
    pub trunk_width: usize,
    pub trunk_layers: usize,
    /// Segments `C` handled by the parameter network.
    pub segments: usize,
    pub ranges: FdRanges,
    pub variant: Variant,
    /// Diagrams used when the parameter network is off; one entry applies
    /// everywhere, otherwise one per equal-length segment.
    pub fixed_fd: Vec<FdParams>,
    pub units: UnitSystem,
    pub pw: PwConstants,
    pub physics: PhysicsOptions,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 32,
            window: 12,
            sensors: 11,
            conv_channels: vec![8, 16],
            kernel: 3,
            head: vec![64],
            trunk_width: 64,
            trunk_layers: 3,
            segments: 4,
            ranges: FdRanges::default(),
            variant: Variant::EXTENDED,
            fixed_fd: vec![FdParams {
                v_f: 100.0,
                rho_c: 0.025,
                a: 2.0,
            }],
            units: UnitSystem::METRIC,
            pw: PwConstants::default(),
            physics: PhysicsOptions::default(),
            seed: 0,
        }
    }
}

/// One valid-padding convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("window", self.window),
            ("sensors", self.sensors),
            ("kernel", self.kernel),
            ("trunk_width", self.trunk_width),
            ("trunk_layers", self.trunk_layers),
            ("segments", self.segments),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.conv_channels.contains(&0) || self.head.contains(&0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        self.ranges.validate()?;
        self.pw.validate()?;
        if !self.variant.param_net {
            if self.fixed_fd.is_empty() {
                return Err(Error::Config("fixed_fd needs at least one diagram".into()));
            }
            for p in &self.fixed_fd {
                p.validate()?;
            }
        }
        Ok(())
    }

    /// Convolution stack for `channels_in` input planes.
    ///
    /// A kernel never exceeds the extent it slides over, so narrow sensor
    /// layouts shrink the kernel instead of producing an empty map.
    pub(crate) fn conv_plan(&self, channels_in: usize) -> (Vec<ConvLayer>, usize, usize) {
        let (mut h, mut w, mut cin) = (self.window, self.sensors, channels_in);
        let mut layers = Vec::with_capacity(self.conv_channels.len());
        for &cout in &self.conv_channels {
            let kh = self.kernel.min(h);
            let kw = self.kernel.min(w);
            layers.push(ConvLayer { cin, cout, kh, kw });
            h = h - kh + 1;
            w = w - kw + 1;
            cin = cout;
        }
        (layers, cin * h * w, h * w)
    }

    /// Differences in the fields that determine parameter shapes.
    pub fn structural_diff(&self, other: &ModelConfig) -> Vec<String> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(
                if self.$f != other.$f {
                    out.push(format!("{}: {:?} vs {:?}", stringify!($f), self.$f, other.$f));
                }
            )*};
        }
        cmp!(k, window, sensors, conv_channels, kernel, head, trunk_width, trunk_layers, segments, variant);
        out
    }
}
