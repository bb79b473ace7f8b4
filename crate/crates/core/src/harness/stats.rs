use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Trace, TraceRecord};

/// One point of the rate statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// Number of iterates the minimum runs over (logged index + 1).
    pub k: u64,
    /// Seed-averaged running minimum of `‖∇J(θ_j)‖²`.
    pub runmin: f64,
    /// `runmin · k^{1/2−δ}`
    pub s: f64,
}

/// `s_k = mean_seeds(min_{j<k} ‖∇J(θ_j)‖²) · k^{1/2−δ}` over the gradient
/// norms logged in every trace. Traces must log norms at the same
/// iterations; the sequence stops at the shortest one.
pub fn rate_statistic(traces: &[Trace], delta: f64) -> Result<Vec<RatePoint>> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces"));
    }
    let logs: Vec<Vec<(u64, f64)>> = traces
        .iter()
        .map(|t| {
            t.records
                .iter()
                .filter_map(|r| r.grad_norm_sq.map(|g| (r.k, g)))
                .collect()
        })
        .collect();
    let len = logs.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return Err(Error::invalid("traces carry no gradient-norm logs"));
    }
    let mut mins = vec![f64::INFINITY; logs.len()];
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let j = logs[0][i].0;
        if logs.iter().any(|l| l[i].0 != j) {
            return Err(Error::invalid("gradient norms logged at different iterations"));
        }
        for (m, l) in mins.iter_mut().zip(&logs) {
            *m = m.min(l[i].1);
        }
        let runmin = mins.iter().sum::<f64>() / mins.len() as f64;
        let k = j + 1;
        out.push(RatePoint {
            k,
            runmin,
            s: runmin * (k as f64).powf(0.5 - delta),
        });
    }
    Ok(out)
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>, count: usize) -> Option<f64> {
    let mut acc = 0.0;
    let mut seen = 0;
    for v in values {
        acc += v?;
        seen += 1;
    }
    (seen == count).then(|| acc / count as f64)
}

/// Pointwise mean over traces, aligned on the iteration index. Optional
/// columns are averaged only where every trace logged them. Stops at the
/// shortest trace.
pub fn average_traces(traces: &[Trace]) -> Result<Vec<TraceRecord>> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces"));
    }
    let len = traces.iter().map(|t| t.records.len()).min().unwrap_or(0);
    let count = traces.len();
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let rows: Vec<&TraceRecord> = traces.iter().map(|t| &t.records[i]).collect();
        let first = rows[0];
        if rows.iter().any(|r| r.k != first.k) {
            return Err(Error::invalid("traces are logged at different iterations"));
        }
        let grad_evals = rows.iter().map(|r| r.grad_evals).sum::<u64>() / count as u64;
        out.push(TraceRecord {
            k: first.k,
            epoch: first.epoch,
            grad_evals,
            loss: rows.iter().map(|r| r.loss).sum::<f64>() / count as f64,
            grad_norm_sq: mean_opt(rows.iter().map(|r| r.grad_norm_sq), count),
            gamma: mean_opt(rows.iter().map(|r| r.gamma), count),
            eta: mean_opt(rows.iter().map(|r| r.eta), count),
            curv_inner: mean_opt(rows.iter().map(|r| r.curv_inner), count),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{Algorithm, RunStatus};
    use crate::params::ParamVector;
    use approx::assert_relative_eq;

    fn synthetic(norms: impl Fn(u64) -> f64, len: u64) -> Trace {
        let records = (0..len)
            .map(|k| TraceRecord {
                k,
                epoch: k as f64,
                grad_evals: k,
                loss: norms(k),
                grad_norm_sq: Some(norms(k)),
                gamma: None,
                eta: None,
                curv_inner: None,
            })
            .collect();
        Trace {
            algorithm: Algorithm::Sgd,
            records,
            status: RunStatus::Completed,
            theta0: ParamVector::zeros(1),
            final_theta: ParamVector::zeros(1),
            iterations: len,
            grad_evals: len,
            fn_evals: 0,
            batch_size: 1,
            iters_per_epoch: 1,
            seed: 0,
            tuner: None,
            clamp: None,
            batches: None,
        }
    }

    #[test]
    fn constant_norm_is_unbounded() {
        let delta = 0.001;
        let s = rate_statistic(&[synthetic(|_| 1.0, 100)], delta).unwrap();
        for p in &s {
            assert_relative_eq!(p.s, (p.k as f64).powf(0.5 - delta), max_relative = 1e-14);
        }
        assert!(s.last().unwrap().s > 9.0);
    }

    #[test]
    fn inverse_norm_vanishes() {
        let delta = 0.001;
        let s = rate_statistic(&[synthetic(|j| 1.0 / (j + 1) as f64, 1000)], delta).unwrap();
        for p in &s {
            assert_relative_eq!(p.s, (p.k as f64).powf(-0.5 - delta), max_relative = 1e-12);
        }
        assert_eq!(s[0].s, 1.0);
    }

    #[test]
    fn averages_running_minimum_across_seeds() {
        let a = synthetic(|j| if j == 1 { 0.0 } else { 1.0 }, 3);
        let b = synthetic(|_| 2.0, 3);
        let s = rate_statistic(&[a, b], 0.0).unwrap();
        assert_eq!(s[0].runmin, 1.5);
        assert_eq!(s[2].runmin, 1.0);
        assert!(rate_statistic(&[], 0.0).is_err());
    }

    #[test]
    fn pointwise_average() {
        let a = synthetic(|_| 1.0, 4);
        let b = synthetic(|_| 3.0, 3);
        let avg = average_traces(&[a, b]).unwrap();
        assert_eq!(avg.len(), 3);
        assert_eq!(avg[2].loss, 2.0);
        assert_eq!(avg[2].gamma, None);
        assert_eq!(avg[1].grad_norm_sq, Some(2.0));
    }
}
