//! AIC comparison of candidate models fitted to one observation set.

use serde::{Deserialize, Serialize};

use super::lmm::{Estimation, LmmFit};
use super::StatsError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry<T> {
    pub label: String,
    pub aic: T,
    pub delta_aic: T,
}

/// Candidates sorted by AIC relative to a baseline (lower is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicLadder<T> {
    pub baseline: String,
    pub entries: Vec<LadderEntry<T>>,
}

impl<T: Scalar> AicLadder<T> {
    pub fn delta(&self, label: &str) -> Option<T> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.delta_aic)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,aic,delta_aic\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.label, e.aic, e.delta_aic));
        }
        out
    }
}

pub fn compare_aic<T: Scalar>(
    fits: &[(String, LmmFit<T>)],
    baseline_index: usize,
) -> Result<AicLadder<T>, StatsError> {
    let (base_label, base) = fits
        .get(baseline_index)
        .ok_or_else(|| StatsError::Numerical(format!("baseline index {baseline_index} out of range")))?;
    for (label, fit) in fits {
        if fit.n_obs != base.n_obs || fit.obs_fingerprint != base.obs_fingerprint {
            return Err(StatsError::MismatchedObservations {
                label: label.clone(),
                baseline: base_label.clone(),
            });
        }
        if fit.method != Estimation::Ml {
            return Err(StatsError::Numerical(format!("{label}: AIC comparison requires ML fits")));
        }
    }
    let mut entries: Vec<LadderEntry<T>> = fits
        .iter()
        .map(|(label, fit)| LadderEntry { label: label.clone(), aic: fit.aic, delta_aic: fit.aic - base.aic })
        .collect();
    entries.sort_by(|a, b| {
        a.delta_aic
            .partial_cmp(&b.delta_aic)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(AicLadder { baseline: base_label.clone(), entries })
}
