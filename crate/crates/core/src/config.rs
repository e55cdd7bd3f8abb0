//! Pipeline settings with every default in one place.
//!
//! | setting | default | meaning |
//! |---|---|---|
//! | `km_window` | 21 | KM moment smoothing window, samples (odd) |
//! | `goal.window` | 21 | dispersion / direction / jump-feature window, samples (odd) |
//! | `goal.settle_window` | 101 | trailing median and MAD window for the settled score |
//! | `goal.contamination` | 0.05 | ECOD outlier fraction |
//! | `goal.eps_v` | 0.05 m/s | motion-direction deadband |
//! | `goal.xi` | all 1 | goal-dynamics weights |
//! | `goal.temperature` | mean goal spacing (1 m for one goal) | softmax temperature |
//! | `goal.delta_switch` | 0.01 m | discovery-mode switch threshold |
//! | `library` | `default2` | SINDy library `{1, X, g, X^2, X*g, g^2}` |
//! | `eps_ssr` | 0.1 | SSR sparsity tolerance |
//! | `nll_starts` | 8 | NLL multi-starts |
//! | `min_transitions` | 10 | transitions needed for a per-goal NLL fit |
//! | `cells` | 201 | MAP grid cells per dimension |
//! | `warmup` | 40 | samples before the first online prediction |
//! | `relax_mu_beta` | false | SINDy pathway estimates a jump mean instead of 0 |
//! | `normalize_goal_mixture` | false | divide the reachability goal sum by K |
//! | slices | 0.5, 1, 2, 4, 8 s | reachability slice times |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::GoalConfig;
use crate::km;
use crate::mixture::NllOptions;
use crate::sindy::{FunctionLibrary, EPS_SSR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub km_window: usize,
    pub goal: GoalConfig,
    pub library: String,
    pub eps_ssr: f64,
    pub nll_starts: usize,
    pub min_transitions: usize,
    pub cells: usize,
    pub warmup: usize,
    pub relax_mu_beta: bool,
    pub normalize_goal_mixture: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            km_window: km::DEFAULT_WINDOW,
            goal: GoalConfig::default(),
            library: "default2".into(),
            eps_ssr: EPS_SSR,
            nll_starts: 8,
            min_transitions: 10,
            cells: 201,
            warmup: 40,
            relax_mu_beta: false,
            normalize_goal_mixture: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.km_window == 0 || self.km_window % 2 == 0 {
            return Err(Error::invalid(format!("window must be odd, got {}", self.km_window)));
        }
        self.goal.validate()?;
        FunctionLibrary::from_name(&self.library)?;
        if !(self.eps_ssr >= 0.0) {
            return Err(Error::invalid("eps_ssr must be non-negative"));
        }
        if self.nll_starts == 0 {
            return Err(Error::invalid("nll_starts must be at least 1"));
        }
        if self.cells < 3 {
            return Err(Error::invalid("cells must be at least 3"));
        }
        if self.warmup < crate::ecod::MIN_SAMPLES + 1 {
            return Err(Error::invalid(format!(
                "warmup must be at least {} samples",
                crate::ecod::MIN_SAMPLES + 1
            )));
        }
        Ok(())
    }

    pub fn library(&self) -> Result<FunctionLibrary> {
        FunctionLibrary::from_name(&self.library)
    }

    pub fn nll_options(&self) -> NllOptions {
        NllOptions {
            starts: self.nll_starts,
            min_transitions: self.min_transitions,
            ..NllOptions::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}
