use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Log density of the Chinese restaurant process,
/// `log Γ(α) + K log α − log Γ(α + n) + Σ_k log Γ(|B_k|)`, with `n` the
/// number of covered observations.
pub fn crp_log_density(z: &Partition, alpha: f64) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::Precondition("CRP density of an empty partition".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let n = z.num_covered() as f64;
    let k = z.num_blocks() as f64;
    let sizes: f64 = z.blocks().iter().map(|b| ln_gamma(b.len() as f64)).sum();
    Ok(ln_gamma(alpha) + k * alpha.ln() - ln_gamma(alpha + n) + sizes)
}

/// Precomputed log-Gamma values for the CRP over at most `n` observations.
#[derive(Clone, Debug)]
pub struct CrpTable {
    ln_alpha: f64,
    ln_gamma_alpha: f64,
    // ln Γ(k), k = 0..=n (index 0 unused)
    ln_gamma_size: Vec<f64>,
    // ln Γ(α + k), k = 0..=n
    ln_gamma_shifted: Vec<f64>,
}

impl CrpTable {
    pub fn new(alpha: f64, n: usize) -> Self {
        Self {
            ln_alpha: alpha.ln(),
            ln_gamma_alpha: ln_gamma(alpha),
            ln_gamma_size: (0..=n)
                .map(|k| if k == 0 { 0.0 } else { ln_gamma(k as f64) })
                .collect(),
            ln_gamma_shifted: (0..=n).map(|k| ln_gamma(alpha + k as f64)).collect(),
        }
    }

    /// Log density for the given block sizes; 0 for an empty partition.
    pub fn log_density(&self, sizes: impl Iterator<Item = usize>) -> f64 {
        let mut total = 0;
        let mut k = 0;
        let mut acc = 0.0;
        for s in sizes {
            total += s;
            k += 1;
            acc += self.ln_gamma_size[s];
        }
        if k == 0 {
            return 0.0;
        }
        self.ln_gamma_alpha + k as f64 * self.ln_alpha - self.ln_gamma_shifted[total] + acc
    }

    /// Change in log density when `moved` observations leave a block of size
    /// `source` (or are uncovered, `None`) and join a block of size `target`
    /// (`None` for a fresh block). `covered` is the current coverage.
    pub fn delta(
        &self,
        covered: usize,
        moved: usize,
        source: Option<usize>,
        target: Option<usize>,
    ) -> f64 {
        let mut d = 0.0;
        match source {
            None => {
                d += self.ln_gamma_shifted[covered] - self.ln_gamma_shifted[covered + moved];
            }
            Some(s) if s > moved => {
                d += self.ln_gamma_size[s - moved] - self.ln_gamma_size[s];
            }
            Some(s) => {
                d -= self.ln_gamma_size[s] + self.ln_alpha;
            }
        }
        match target {
            Some(t) => d += self.ln_gamma_size[t + moved] - self.ln_gamma_size[t],
            None => d += self.ln_gamma_size[moved] + self.ln_alpha,
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_has_probability_one() {
        let z: Partition = "1".parse().unwrap();
        assert!(crp_log_density(&z, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn pair_in_one_block() {
        // Γ(1)·1·Γ(2)/Γ(3) = 1/2
        let z: Partition = "1,2".parse().unwrap();
        assert!((crp_log_density(&z, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn empty_partition_rejected() {
        assert!(crp_log_density(&Partition::empty(), 1.0).is_err());
    }

    #[test]
    fn table_agrees_with_direct_formula() {
        let t = CrpTable::new(0.7, 10);
        let z: Partition = "1,2,5;3;4,6,7".parse().unwrap();
        let direct = crp_log_density(&z, 0.7).unwrap();
        let tab = t.log_density(z.blocks().iter().map(Vec::len));
        assert!((direct - tab).abs() < 1e-12);
    }

    #[test]
    fn delta_matches_difference() {
        let t = CrpTable::new(2.0, 10);
        let before = t.log_density([3, 2].into_iter());
        // move 2 of the 3 into the pair
        let after = t.log_density([1, 4].into_iter());
        assert!((t.delta(5, 2, Some(3), Some(2)) - (after - before)).abs() < 1e-12);
        // from uncovered into a fresh block
        let after = t.log_density([3, 2, 2].into_iter());
        assert!((t.delta(5, 2, None, None) - (after - before)).abs() < 1e-12);
        // emptying the source into a fresh block is a no-op
        assert!(t.delta(5, 2, Some(2), None).abs() < 1e-12);
    }
}
