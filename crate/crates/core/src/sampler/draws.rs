use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retained draws of every chain, row-major (iteration × parameter) per chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    names: Vec<String>,
    chains: Vec<Vec<f64>>,
    n_draws: usize,
    burn_in: usize,
    acceptance: Vec<Vec<f64>>,
    step_sizes: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    pub(crate) fn new(
        names: Vec<String>,
        chains: Vec<Vec<f64>>,
        n_draws: usize,
        burn_in: usize,
        acceptance: Vec<Vec<f64>>,
        step_sizes: Vec<Vec<f64>>,
    ) -> Self {
        debug_assert!(chains.iter().all(|c| c.len() == n_draws * names.len()));
        Self {
            names,
            chains,
            n_draws,
            burn_in,
            acceptance,
            step_sizes,
        }
    }

    /// Assemble draws from per-chain matrices given as `[chain][iteration][param]`.
    pub fn from_matrices(names: Vec<String>, chains: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_draws = chains.first().map_or(0, Vec::len);
        let dim = names.len();
        let mut flat = Vec::with_capacity(chains.len());
        for ch in chains {
            if ch.len() != n_draws || ch.iter().any(|row| row.len() != dim) {
                return Err(Error::Config("ragged draw matrices".into()));
            }
            flat.push(ch.into_iter().flatten().collect());
        }
        let n_chains = flat.len();
        Ok(Self::new(
            names,
            flat,
            n_draws,
            0,
            vec![vec![f64::NAN; dim]; n_chains],
            vec![vec![f64::NAN; dim]; n_chains],
        ))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// Post-burn-in acceptance rate per coordinate for one chain.
    pub fn acceptance(&self, chain: usize) -> &[f64] {
        &self.acceptance[chain]
    }

    /// Frozen proposal scales per coordinate for one chain.
    pub fn step_sizes(&self, chain: usize) -> &[f64] {
        &self.step_sizes[chain]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, chain: usize, param: usize) -> Vec<f64> {
        let d = self.dim();
        self.chains[chain].iter().skip(param).step_by(d).copied().collect()
    }

    /// `[chain][iteration]` for one parameter.
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains()).map(|c| self.column(c, param)).collect()
    }

    /// All chains concatenated in chain order; index `c * n_draws + t` is
    /// draw `t` of chain `c` for every parameter, so vectors pooled from
    /// different parameters stay paired.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.param_chains(param).concat()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|i| self.pooled(i))
    }

    /// One row per retained draw: `chain,iteration,<param>...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        let d = self.dim();
        for (c, values) in self.chains.iter().enumerate() {
            for (t, row) in values.chunks(d).enumerate() {
                let mut rec = vec![c.to_string(), (t + 1).to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_csv() {
        let d = PosteriorDraws::from_matrices(
            vec!["a".into(), "b".into()],
            vec![
                vec![vec![1.0, 2.0], vec![3.0, 4.0]],
                vec![vec![5.0, 6.0], vec![7.0, 8.0]],
            ],
        )
        .unwrap();
        assert_eq!(d.column(1, 0), vec![5.0, 7.0]);
        assert_eq!(d.pooled(1), vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(d.pooled_by_name("a").unwrap(), vec![1.0, 3.0, 5.0, 7.0]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 5);
        assert!(s.starts_with("chain,iteration,a,b\n0,1,1,2\n"));
    }

    #[test]
    fn ragged_rejected() {
        assert!(PosteriorDraws::from_matrices(
            vec!["a".into()],
            vec![vec![vec![1.0]], vec![vec![1.0], vec![2.0]]]
        )
        .is_err());
    }
}
