use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

/// How the two agent streams share weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// One encoder per layer for both streams, one batch norm over both.
    Symmetric,
    /// Shared convolutions, a side-code input channel and a batch norm per stream.
    Asymmetric,
    /// A separate encoder per stream.
    Dual,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Symmetric => "sym",
            Variant::Asymmetric => "asym",
            Variant::Dual => "dual",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sym" | "symmetric" => Ok(Variant::Symmetric),
            "asym" | "asymmetric" => Ok(Variant::Asymmetric),
            "dual" => Ok(Variant::Dual),
            other => Err(format!("unknown variant '{other}' (expected sym|asym|dual)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of feature-weaving layers.
    pub layers: usize,
    /// Feature width `D` of every layer output.
    pub width: usize,
    /// Intermediate width `D'` of the set encoders.
    pub pool_width: usize,
    pub variant: Variant,
    /// Shortcut every this many layers.
    pub residual_period: usize,
    /// Lowest score after rank scaling.
    pub c_min: f64,
}

impl ModelConfig {
    /// `D' = 2D`, period-2 shortcuts, symmetric weights.
    pub fn new(layers: usize, width: usize) -> Self {
        Self {
            layers,
            width,
            pool_width: 2 * width,
            variant: Variant::Symmetric,
            residual_period: 2,
            c_min: weavematch_core::DEFAULT_C_MIN,
        }
    }

    /// The 6-layer, width-24 network.
    pub fn wn6() -> Self {
        Self::new(6, 24)
    }

    /// The 18-layer, width-32 network.
    pub fn wn18() -> Self {
        Self::new(18, 32)
    }

    pub fn with_pool_width(mut self, pool_width: usize) -> Self {
        self.pool_width = pool_width;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Parses `"L,D,D'"` (or `"L,D"`, taking `D' = 2D`).
    pub fn from_arch(arch: &str) -> Result<Self> {
        let parts: Vec<usize> = arch
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| NnError::Config(format!("architecture '{arch}' is not L,D[,Dp]")))?;
        let cfg = match parts[..] {
            [l, d] => Self::new(l, d),
            [l, d, dp] => Self::new(l, d).with_pool_width(dp),
            _ => return Err(NnError::Config(format!("architecture '{arch}' is not L,D[,Dp]"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 || self.pool_width == 0 {
            return Err(NnError::Config(format!(
                "layers, width and pool width must be positive (got {}, {}, {})",
                self.layers, self.width, self.pool_width
            )));
        }
        if self.residual_period == 0 {
            return Err(NnError::Config("residual period must be positive".into()));
        }
        if !(self.c_min > 0.0 && self.c_min < 1.0) {
            return Err(NnError::Config(format!("c_min must lie in (0, 1), got {}", self.c_min)));
        }
        Ok(())
    }

    /// Channels per stream entering the first layer.
    pub fn input_channels(&self) -> usize {
        match self.variant {
            Variant::Asymmetric => 2,
            _ => 1,
        }
    }

    /// Width of the stream entering layer `l` (1-based).
    pub fn layer_input_width(&self, l: usize) -> usize {
        if l == 1 {
            self.input_channels()
        } else {
            self.width
        }
    }

    /// Closed-form count of trainable scalars.
    pub fn param_count(&self) -> usize {
        let (d, dp) = (self.width, self.pool_width);
        let mut total = 0;
        for l in 1..=self.layers {
            let cat = 2 * self.layer_input_width(l);
            let convs = cat * dp + (cat + dp) * d + 2;
            let (encoders, norms) = match self.variant {
                Variant::Symmetric => (1, 1),
                Variant::Asymmetric => (1, 2),
                Variant::Dual => (2, 2),
            };
            total += encoders * convs + norms * 2 * d;
        }
        total += self.shortcut_sources().filter(|&s| self.needs_projection(s)).count() * self.input_channels() * d;
        total + 2 * d + 1
    }

    /// Layer indices (1-based) whose output receives a shortcut, paired
    /// with the index of the tensor added to it (0 is the network input).
    pub fn shortcuts(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.layers)
            .filter(|l| l % self.residual_period == 0)
            .map(|l| (l, l - self.residual_period))
    }

    fn shortcut_sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.shortcuts().map(|(_, s)| s)
    }

    /// Whether the tensor after layer `source` needs a width projection.
    pub fn needs_projection(&self, source: usize) -> bool {
        source == 0 && self.input_channels() != self.width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_arch() {
        let c = ModelConfig::from_arch("18,32,64").unwrap();
        assert_eq!((c.layers, c.width, c.pool_width), (18, 32, 64));
        assert_eq!(ModelConfig::from_arch("6,24").unwrap().pool_width, 48);
        assert!(ModelConfig::from_arch("6").is_err());
        assert!(ModelConfig::from_arch("0,8").is_err());
        assert!(ModelConfig::from_arch("a,b").is_err());
    }

    #[test]
    fn shortcut_layout() {
        let c = ModelConfig::new(5, 8);
        assert_eq!(c.shortcuts().collect::<Vec<_>>(), vec![(2, 0), (4, 2)]);
    }
}
