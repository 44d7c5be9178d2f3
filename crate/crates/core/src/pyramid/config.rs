use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Dims;

/// Strides of P3, P4, P5 relative to the input image.
pub const LEVEL_STRIDES: [usize; 3] = [8, 16, 32];

/// Number of stacked 3x3 convs inside the baseline CSP block.
pub const BASELINE_CSP_DEPTH: usize = 3;

fn default_in_channels() -> [usize; 3] {
    [64, 128, 256]
}

/// Neck configuration, serialised as JSON:
///
/// ```json
/// {"hidden_dim": 64, "input_size": 320, "use_au": true, "use_ad": true,
///  "use_csp_pac": true, "seed": 0, "in_channels": [64, 128, 256]}
/// ```
///
/// `in_channels` (backbone channels of P3/P4/P5) is optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeckConfig {
    pub hidden_dim: usize,
    pub input_size: usize,
    pub use_au: bool,
    pub use_ad: bool,
    pub use_csp_pac: bool,
    pub seed: u64,
    #[serde(default = "default_in_channels")]
    pub in_channels: [usize; 3],
}

impl Default for NeckConfig {
    fn default() -> Self {
        NeckConfig {
            hidden_dim: 64,
            input_size: 320,
            use_au: true,
            use_ad: true,
            use_csp_pac: true,
            seed: 0,
            in_channels: default_in_channels(),
        }
    }
}

impl NeckConfig {
    /// Smallest useful configuration: hidden 8, levels 8/4/2.
    pub fn tiny() -> Self {
        NeckConfig {
            hidden_dim: 8,
            input_size: 64,
            in_channels: [8, 12, 16],
            ..Default::default()
        }
    }

    /// Hidden 256 at 640x640, the setting the complexity comparison uses.
    pub fn reference() -> Self {
        NeckConfig {
            hidden_dim: 256,
            input_size: 640,
            ..Default::default()
        }
    }

    pub fn with_toggles(mut self, au: bool, ad: bool, csp_pac: bool) -> Self {
        self.use_au = au;
        self.use_ad = ad;
        self.use_csp_pac = csp_pac;
        self
    }

    pub fn baseline(self) -> Self {
        self.with_toggles(false, false, false)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 2 || self.hidden_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden_dim must be an even number >= 2 (the up/down-sampling blocks split channels in half), got {}",
                self.hidden_dim
            )));
        }
        if self.input_size < 32 || self.input_size % 32 != 0 {
            return Err(Error::Config(format!(
                "input_size must be a positive multiple of 32 (P5 has stride 32), got {}; nearest valid values are {} and {}",
                self.input_size,
                (self.input_size / 32).max(1) * 32,
                (self.input_size / 32 + 1) * 32
            )));
        }
        if self.in_channels.contains(&0) {
            return Err(Error::Config(format!(
                "in_channels entries must be >= 1, got {:?}",
                self.in_channels
            )));
        }
        Ok(())
    }

    /// Spatial size of P3, P4, P5.
    pub fn level_sizes(&self) -> [usize; 3] {
        LEVEL_STRIDES.map(|s| self.input_size / s)
    }

    /// Backbone feature dims for batch `n`.
    pub fn level_dims(&self, n: usize) -> [Dims; 3] {
        let sizes = self.level_sizes();
        [0, 1, 2].map(|i| Dims::new(n, self.in_channels[i], sizes[i], sizes[i]))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: NeckConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "{e}; expected an object with hidden_dim (even integer), input_size (multiple of 32), \
                 use_au, use_ad, use_csp_pac (booleans), seed (u64) and optional in_channels ([u, u, u])"
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
