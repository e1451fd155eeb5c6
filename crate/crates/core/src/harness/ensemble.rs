use std::fmt;
use std::io::Write;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{run_metrics, HarnessError, RunMetrics, Scenario};
use crate::select::SelectionPolicy;

/// How independent runs are scheduled. Results are identical either way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// falls back to [`Execution::Sequential`].
    #[default]
    Parallel,
}

/// Maps `f` over `items`, preserving order.
pub fn map_runs<T, U, F>(items: Vec<T>, execution: Execution, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.into_par_iter().map(f).collect(),
        _ => items.into_iter().map(f).collect(),
    }
}

/// RMSE triple for one policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Errors {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
}

impl Errors {
    fn of(m: &RunMetrics) -> Self {
        Errors {
            position: m.rmse_position,
            velocity: m.rmse_velocity,
            attitude: m.rmse_attitude,
        }
    }

    fn nan() -> Self {
        Errors {
            position: f64::NAN,
            velocity: f64::NAN,
            attitude: f64::NAN,
        }
    }
}

/// Both policies flown with the same seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedRun {
    /// 1-based row number.
    pub run: usize,
    pub seed: u64,
    pub sequential: Result<RunMetrics, String>,
    pub greedy: Result<RunMetrics, String>,
}

impl PairedRun {
    pub fn complete(&self) -> bool {
        self.sequential.is_ok() && self.greedy.is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub runs: Vec<PairedRun>,
    /// Averages over pairs where both runs succeeded.
    pub sequential: Errors,
    pub greedy: Errors,
    /// `(greedy − sequential) / sequential · 100` per metric.
    pub diff_percent: Errors,
    pub included: usize,
    pub failures: Vec<String>,
}

pub fn percent_diff(greedy: f64, sequential: f64) -> f64 {
    (greedy - sequential) / sequential * 100.0
}

impl EnsembleSummary {
    fn from_runs(runs: Vec<PairedRun>) -> Self {
        let mut failures = Vec::new();
        for r in &runs {
            for (name, res) in [("sequential", &r.sequential), ("greedy", &r.greedy)] {
                if let Err(e) = res {
                    failures.push(format!("run {} (seed {}) {name}: {e}", r.run, r.seed));
                }
            }
        }
        let complete: Vec<(Errors, Errors)> = runs
            .iter()
            .filter_map(|r| match (&r.sequential, &r.greedy) {
                (Ok(s), Ok(g)) => Some((Errors::of(s), Errors::of(g))),
                _ => None,
            })
            .collect();
        let included = complete.len();
        let mean = |f: &dyn Fn(&(Errors, Errors)) -> f64| complete.iter().map(f).sum::<f64>() / included as f64;
        let (sequential, greedy) = if included == 0 {
            (Errors::nan(), Errors::nan())
        } else {
            (
                Errors {
                    position: mean(&|p| p.0.position),
                    velocity: mean(&|p| p.0.velocity),
                    attitude: mean(&|p| p.0.attitude),
                },
                Errors {
                    position: mean(&|p| p.1.position),
                    velocity: mean(&|p| p.1.velocity),
                    attitude: mean(&|p| p.1.attitude),
                },
            )
        };
        let diff_percent = Errors {
            position: percent_diff(greedy.position, sequential.position),
            velocity: percent_diff(greedy.velocity, sequential.velocity),
            attitude: percent_diff(greedy.attitude, sequential.attitude),
        };
        EnsembleSummary {
            runs,
            sequential,
            greedy,
            diff_percent,
            included,
            failures,
        }
    }

    /// Writes `summary.csv`: one row per run, then `avg` and `diff` rows.
    ///
    /// Columns are `run,pos_seq,pos_opt,vel_seq,vel_opt,att_seq,att_opt`.
    /// Failed runs leave their cells empty. The `diff` row carries the percent
    /// change in the `*_seq` column and leaves `*_opt` empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["run", "pos_seq", "pos_opt", "vel_seq", "vel_opt", "att_seq", "att_opt"])?;
        let cell = |r: &Result<RunMetrics, String>, f: fn(&RunMetrics) -> f64| match r {
            Ok(m) => f(m).to_string(),
            Err(_) => String::new(),
        };
        for r in &self.runs {
            w.write_record([
                r.run.to_string(),
                cell(&r.sequential, |m| m.rmse_position),
                cell(&r.greedy, |m| m.rmse_position),
                cell(&r.sequential, |m| m.rmse_velocity),
                cell(&r.greedy, |m| m.rmse_velocity),
                cell(&r.sequential, |m| m.rmse_attitude),
                cell(&r.greedy, |m| m.rmse_attitude),
            ])?;
        }
        let (s, g, d) = (&self.sequential, &self.greedy, &self.diff_percent);
        w.write_record([
            "avg".to_string(),
            s.position.to_string(),
            g.position.to_string(),
            s.velocity.to_string(),
            g.velocity.to_string(),
            s.attitude.to_string(),
            g.attitude.to_string(),
        ])?;
        w.write_record([
            "diff".to_string(),
            d.position.to_string(),
            String::new(),
            d.velocity.to_string(),
            String::new(),
            d.attitude.to_string(),
            String::new(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for EnsembleSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} | {:>9} {:>9} | {:>9} {:>9} | {:>8} {:>8}", "", "position", "[m]", "velocity", "[m/s]", "attitude", "[deg]")?;
        writeln!(f, "{:>6} | {:>9} {:>9} | {:>9} {:>9} | {:>8} {:>8}", "trial", "seq.", "opt.", "seq.", "opt.", "seq.", "opt.")?;
        let show = |r: &Result<RunMetrics, String>, f: fn(&RunMetrics) -> f64, prec: usize| match r {
            Ok(m) => format!("{:.*}", prec, f(m)),
            Err(_) => "failed".to_string(),
        };
        for r in &self.runs {
            writeln!(
                f,
                "{:>6} | {:>9} {:>9} | {:>9} {:>9} | {:>8} {:>8}",
                r.run,
                show(&r.sequential, |m| m.rmse_position, 4),
                show(&r.greedy, |m| m.rmse_position, 4),
                show(&r.sequential, |m| m.rmse_velocity, 4),
                show(&r.greedy, |m| m.rmse_velocity, 4),
                show(&r.sequential, |m| m.rmse_attitude, 3),
                show(&r.greedy, |m| m.rmse_attitude, 3),
            )?;
        }
        let (s, g, d) = (&self.sequential, &self.greedy, &self.diff_percent);
        writeln!(
            f,
            "{:>6} | {:>9.4} {:>9.4} | {:>9.4} {:>9.4} | {:>8.3} {:>8.3}",
            "avg", s.position, g.position, s.velocity, g.velocity, s.attitude, g.attitude
        )?;
        writeln!(
            f,
            "{:>6} | {:>18} | {:>18} | {:>16}",
            "diff",
            format!("{:+.1}%", d.position),
            format!("{:+.1}%", d.velocity),
            format!("{:+.1}%", d.attitude)
        )?;
        for failure in &self.failures {
            writeln!(f, "failed: {failure}")?;
        }
        Ok(())
    }
}

/// Flies seeds `seed .. seed + n_runs` under both policies.
pub fn monte_carlo(scenario: &Scenario, n_runs: usize) -> Result<EnsembleSummary, HarnessError> {
    monte_carlo_with(scenario, n_runs, Execution::default())
}

pub fn monte_carlo_with(scenario: &Scenario, n_runs: usize, execution: Execution) -> Result<EnsembleSummary, HarnessError> {
    if n_runs == 0 {
        return Err(HarnessError::NoRuns);
    }
    scenario.validate()?;
    let sequential = scenario.sequential_policy();
    let jobs: Vec<(usize, u64, SelectionPolicy)> = (0..n_runs)
        .flat_map(|i| {
            let seed = scenario.seed.wrapping_add(i as u64);
            [(i, seed, sequential.clone()), (i, seed, SelectionPolicy::Greedy)]
        })
        .collect();
    let results = map_runs(jobs, execution, |(_, seed, policy)| {
        run_metrics(&scenario.with_seed(seed).with_policy(policy)).map_err(|e| e.to_string())
    });
    let mut it = results.into_iter();
    let runs = (0..n_runs)
        .map(|i| PairedRun {
            run: i + 1,
            seed: scenario.seed.wrapping_add(i as u64),
            sequential: it.next().expect("sequential result"),
            greedy: it.next().expect("greedy result"),
        })
        .collect();
    Ok(EnsembleSummary::from_runs(runs))
}
