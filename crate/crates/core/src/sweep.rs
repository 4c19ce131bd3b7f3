//! Independent runs evaluated together: parameter sweeps, refinement studies
//! and threshold searches. Each run owns its state, so they parallelize
//! without coordination when the `parallel` feature is on.

use crate::diagnostics::{convergence_order, soliton_error};
use crate::error::{KdvError, Result};
use crate::model::{Discretization, InitialCondition, KdVParams};
use crate::scheme::{run_simulation, RunOutcome, Scheme, Simulation, SimulationConfig};

/// How a batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Self::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Self::Sequential;
    }
}

impl Execution {
    /// Applies `f` to every item, keeping input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Self::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Self::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
        }
    }
}

/// Runs every configuration; results are in input order.
pub fn run_batch(exec: Execution, configs: &[SimulationConfig]) -> Vec<Result<RunOutcome>> {
    exec.map(configs, |c| run_simulation(c.clone()))
}

/// A one-soliton refinement study: each level halves `h` and `τ` together.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStudy {
    pub scheme: Scheme,
    pub params: KdVParams,
    pub amplitude: f64,
    pub center: f64,
    pub sizes: Vec<usize>,
    /// `τ = ratio·h` before rounding to a whole number of steps.
    pub ratio: f64,
    pub final_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    /// `(h, L∞ error at the final time)` per level.
    pub levels: Vec<(f64, f64)>,
    pub order: f64,
}

impl RefinementStudy {
    fn level_config(&self, n: usize) -> Result<SimulationConfig> {
        let h = self.params.length() / n as f64;
        let steps = (self.final_time / (self.ratio * h)).round().max(1.0) as usize;
        let grid = Discretization::new(&self.params, n, self.final_time / steps as f64)?;
        let ic = InitialCondition::Soliton {
            amplitude: self.amplitude,
            center: self.center,
        };
        Ok(SimulationConfig::new(
            self.scheme,
            self.params,
            grid,
            ic,
            steps,
        ))
    }

    fn level_error(&self, n: usize) -> Result<(f64, f64)> {
        let config = self.level_config(n)?;
        let grid = config.grid;
        let steps = config.steps;
        let mut sim = Simulation::new(config)?;
        for _ in 0..steps {
            sim.advance()?;
        }
        let (linf, _) = soliton_error(
            &sim.u()?,
            &self.params,
            &grid,
            self.amplitude,
            self.center,
            sim.time(),
        )?;
        Ok((grid.h, linf))
    }

    pub fn run(&self, exec: Execution) -> Result<RefinementResult> {
        let levels = exec
            .map(&self.sizes, |&n| self.level_error(n))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let order = convergence_order(&levels)?;
        Ok(RefinementResult { levels, order })
    }
}

/// Narrows `[good, bad]` around the point where `is_good` flips, evaluating
/// `probes` interior points per round. `is_good(good)` must hold and
/// `is_good(bad)` must fail; the predicate is assumed monotone in between.
pub fn find_threshold<F>(
    exec: Execution,
    mut good: f64,
    mut bad: f64,
    probes: usize,
    rounds: usize,
    is_good: F,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> bool + Sync + Send,
{
    if probes == 0 || !(good.is_finite() && bad.is_finite()) || good == bad {
        return Err(KdvError::InvalidParameter(
            "threshold search needs a proper bracket".into(),
        ));
    }
    for _ in 0..rounds {
        let points: Vec<f64> = (1..=probes)
            .map(|k| good + (bad - good) * k as f64 / (probes + 1) as f64)
            .collect();
        let verdicts = exec.map(&points, |&x| is_good(x));
        match verdicts.iter().position(|ok| !ok) {
            Some(0) => bad = points[0],
            Some(k) => {
                good = points[k - 1];
                bad = points[k];
            }
            None => good = points[probes - 1],
        }
    }
    Ok((good, bad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order_in_every_mode() {
        let items: Vec<u64> = (0..100).collect();
        let seq = Execution::Sequential.map(&items, |x| x * x);
        assert_eq!(seq, Execution::default().map(&items, |x| x * x));
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn threshold_brackets_a_step_function() {
        for exec in [Execution::Sequential, Execution::default()] {
            let (lo, hi) = find_threshold(exec, 0.0, 1.0, 3, 12, |x| x < 0.3141).unwrap();
            assert!(lo < 0.3141 && hi >= 0.3141 && hi - lo < 1e-6, "{lo} {hi}");
            let (lo, hi) = find_threshold(exec, 1.0, 0.0, 1, 40, |x| x > 0.75).unwrap();
            assert!(lo > 0.75 && hi <= 0.75 && lo - hi < 1e-9, "{lo} {hi}");
        }
        assert!(find_threshold(Execution::Sequential, 1.0, 1.0, 2, 3, |_| true).is_err());
    }

    #[test]
    fn batch_results_do_not_depend_on_execution() {
        let params = KdVParams::new(6.0, 1.0, -15.0, 15.0).unwrap();
        let configs: Vec<SimulationConfig> = [0.02, 0.03, 0.04]
            .iter()
            .map(|&tau| {
                let grid = Discretization::new(&params, 31, tau).unwrap();
                let ic = InitialCondition::Soliton {
                    amplitude: 0.5,
                    center: 0.0,
                };
                SimulationConfig::new(Scheme::Eight, params, grid, ic, 5)
            })
            .collect();
        let a = run_batch(Execution::Sequential, &configs);
        let b = run_batch(Execution::default(), &configs);
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x.trajectory.snapshots, y.trajectory.snapshots);
        }
    }
}
