use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adapt::DomainDataset;
use crate::error::{Error, Result};
use crate::seed::substream;

/// Indices into one domain's example list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub target: usize,
    pub shots: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Validation share of the non-shot remainder, as `(validation, test)` parts.
pub const DEFAULT_RATIO: (usize, usize) = (2, 8);

/// Shuffles a domain, takes `shots` examples for the few-shot pool and
/// divides the rest into validation and test at `ratio`, rounding the
/// validation count to nearest.
pub fn make_split(
    domain: &DomainDataset,
    shots: usize,
    ratio: (usize, usize),
    seed: u64,
) -> Result<SplitPlan> {
    let need = shots + 6;
    if domain.len() < need {
        return Err(Error::Validation(format!(
            "domain {} has {} examples; a {shots}-shot split needs at least {need}",
            domain.domain_id,
            domain.len()
        )));
    }
    if ratio.0 + ratio.1 == 0 {
        return Err(Error::InvalidArgument("split ratio must not be 0:0".into()));
    }
    let mut ids: Vec<usize> = (0..domain.len()).collect();
    ids.shuffle(&mut substream(seed, "split", &[domain.domain_id as u64]));
    let rest = domain.len() - shots;
    let val = (rest as f64 * ratio.0 as f64 / (ratio.0 + ratio.1) as f64).round() as usize;
    Ok(SplitPlan {
        target: domain.domain_id,
        shots: ids[..shots].to_vec(),
        val: ids[shots..shots + val].to_vec(),
        test: ids[shots + val..].to_vec(),
    })
}

impl SplitPlan {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<SplitPlan> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks that the three sets are disjoint and index into `len` examples.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut seen = vec![false; len];
        for &i in self.shots.iter().chain(&self.val).chain(&self.test) {
            if i >= len {
                return Err(Error::Validation(format!("split index {i} out of range {len}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("split index {i} appears twice")));
            }
        }
        Ok(())
    }
}
