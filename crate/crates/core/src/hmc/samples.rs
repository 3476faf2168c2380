use std::io::{Read, Write};

use super::diagnostics::{split_rhat, summarize_draws, Rhat, Summary};
use crate::{Error, Result};

/// Post-warmup draws of every chain, in constrained space.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    /// Indexed `[chain][iteration][parameter]`.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub warmup: usize,
    /// Mean acceptance statistic per chain after warmup.
    pub accept_rate: Vec<f64>,
    /// Adapted step size per chain.
    pub step_size: Vec<f64>,
    /// Divergent post-warmup transitions per chain.
    pub divergences: Vec<usize>,
    pub warnings: Vec<String>,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_total(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::domain(format!("unknown parameter '{name}'")))
    }

    /// Draws of one parameter for one chain.
    pub fn chain_column(&self, chain: usize, index: usize) -> Vec<f64> {
        self.draws[chain].iter().map(|d| d[index]).collect()
    }

    /// Draws of one parameter pooled over chains, chain-major.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.param_index(name)?;
        Ok(self.draws.iter().flatten().map(|d| d[k]).collect())
    }

    /// Full draw vectors pooled over chains, chain-major.
    pub fn pooled_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.iter().flatten().map(Vec::as_slice)
    }

    pub fn rhat(&self, name: &str) -> Result<Rhat> {
        let k = self.param_index(name)?;
        let cols: Vec<Vec<f64>> = (0..self.n_chains()).map(|c| self.chain_column(c, k)).collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        split_rhat(&refs)
    }

    /// Split-R̂ for every parameter, in `names` order.
    pub fn rhat_all(&self) -> Result<Vec<(String, Rhat)>> {
        self.names
            .iter()
            .map(|n| Ok((n.clone(), self.rhat(n)?)))
            .collect()
    }

    /// Largest finite-or-infinite R̂ over parameters, ignoring degenerate
    /// constant parameters that agree across chains.
    pub fn max_rhat(&self) -> Result<f64> {
        Ok(self
            .rhat_all()?
            .iter()
            .map(|(_, r)| r.value)
            .fold(1.0, f64::max))
    }

    pub fn summarize(&self, name: &str) -> Result<Summary> {
        Ok(summarize_draws(&self.pooled(name)?))
    }

    /// Writes `chain,iter,<names…>` with one row per retained draw. `iter`
    /// counts from 1 within each chain.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for (c, chain) in self.draws.iter().enumerate() {
            for (i, draw) in chain.iter().enumerate() {
                row.clear();
                row.push((c + 1).to_string());
                row.push((i + 1).to_string());
                row.extend(draw.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads draws written by [`PosteriorSamples::write_csv`]. Sampler
    /// statistics are not stored in the file and come back empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "iter" {
            return Err(Error::data("samples file must start with columns chain,iter"));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut draws: Vec<Vec<Vec<f64>>> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::data(format!("samples row {}: invalid {what}", line + 2));
            let chain: usize = rec[0].parse().map_err(|_| bad("chain"))?;
            if chain == 0 {
                return Err(bad("chain"));
            }
            let values = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| bad("value"))?;
            if values.len() != names.len() {
                return Err(bad("column count"));
            }
            while draws.len() < chain {
                draws.push(Vec::new());
            }
            draws[chain - 1].push(values);
        }
        let n = draws.len();
        Ok(PosteriorSamples {
            names,
            draws,
            warmup: 0,
            accept_rate: vec![f64::NAN; n],
            step_size: vec![f64::NAN; n],
            divergences: vec![0; n],
            warnings: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> PosteriorSamples {
        PosteriorSamples {
            names: vec!["a".into(), "b".into()],
            draws: vec![
                vec![vec![0.1, 1.0 / 3.0], vec![0.2, 2.5]],
                vec![vec![-1e-300, 7.0], vec![0.4, 8.0]],
            ],
            warmup: 10,
            accept_rate: vec![0.8, 0.8],
            step_size: vec![0.5, 0.5],
            divergences: vec![0, 0],
            warnings: vec![],
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = toy();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = PosteriorSamples::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.names, s.names);
        assert_eq!(back.draws, s.draws);
    }

    #[test]
    fn pooled_is_chain_major() {
        assert_eq!(toy().pooled("b").unwrap(), vec![1.0 / 3.0, 2.5, 7.0, 8.0]);
        assert!(toy().pooled("c").is_err());
    }
}
