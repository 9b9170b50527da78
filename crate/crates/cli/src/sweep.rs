//! Paired sweeps over one experiment variable.
//!
//! Every grid point and seed sees identical environment randomness (the
//! shared evaluation seed), so curves compare like with like. Variables that
//! change what is learned (feedback widths, AGI widths, reward weight) train
//! one model per grid point and seed; test-time variables (feedback interval,
//! noise ratios) train the base model once per seed and reuse its checkpoint
//! across the grid. The `n-k` grid point 0 bypasses training and scores the
//! random policy.

use crate::commands::{eval_or_reuse, train_or_reuse, EvalSummary};
use crate::config::{RunConfig, Scheme};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    NK,
    FeedbackBits,
    NG,
    NGBits,
    LambdaC,
    FeedbackInterval,
    InputNoise,
    FeedbackNoise,
}

impl SweepVariable {
    /// Does this variable change the trained model (vs only the test
    /// protocol)?
    pub fn affects_training(self) -> bool {
        !matches!(
            self,
            SweepVariable::FeedbackInterval | SweepVariable::InputNoise | SweepVariable::FeedbackNoise
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NK => "n-k",
            SweepVariable::FeedbackBits => "feedback-bits",
            SweepVariable::NG => "n-g",
            SweepVariable::NGBits => "n-g-bits",
            SweepVariable::LambdaC => "lambda-c",
            SweepVariable::FeedbackInterval => "feedback-interval",
            SweepVariable::InputNoise => "input-noise",
            SweepVariable::FeedbackNoise => "feedback-noise",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sweep: SweepSection,
    #[serde(default)]
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading sweep spec {}", path.display()))?;
        let spec: SweepSpec = toml::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.values.is_empty() || self.sweep.seeds.is_empty() {
            bail!("sweep grid and seed set must be nonempty");
        }
        for &v in &self.sweep.values {
            if !v.is_finite() || v < 0.0 {
                bail!("sweep values must be finite and nonnegative, got {v}");
            }
            let integral = matches!(
                self.sweep.variable,
                SweepVariable::NK
                    | SweepVariable::FeedbackBits
                    | SweepVariable::NG
                    | SweepVariable::NGBits
                    | SweepVariable::FeedbackInterval
            );
            if integral && v.fract() != 0.0 {
                bail!(
                    "sweep variable {} takes integer values, got {v}",
                    self.sweep.variable.name()
                );
            }
        }
        // every non-bypass grid point must resolve to a valid config
        for &v in &self.sweep.values {
            if self.sweep.variable == SweepVariable::NK && v == 0.0 {
                continue;
            }
            self.apply(v)?.validate()?;
        }
        Ok(())
    }

    /// Base config with the swept variable overridden.
    pub fn apply(&self, value: f64) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        match self.sweep.variable {
            SweepVariable::NK => cfg.architecture.n_k = value as usize,
            SweepVariable::FeedbackBits => {
                cfg.architecture.binary_feedback = true;
                cfg.architecture.feedback_bits = value as usize;
            }
            SweepVariable::NG => {
                if cfg.architecture.scheme != Scheme::DDecision {
                    bail!("n-g sweeps require the d-decision scheme");
                }
                cfg.architecture.n_g = Some(value as usize);
            }
            SweepVariable::NGBits => {
                if cfg.architecture.scheme != Scheme::DDecision {
                    bail!("n-g-bits sweeps require the d-decision scheme");
                }
                cfg.architecture.binary_agi = true;
                cfg.architecture.n_g_bits = value as usize;
            }
            SweepVariable::LambdaC => cfg.scenario.lambda_c = value,
            SweepVariable::FeedbackInterval => cfg.evaluation.feedback_interval = value as usize,
            SweepVariable::InputNoise => cfg.evaluation.input_noise_ratio = value,
            SweepVariable::FeedbackNoise => cfg.evaluation.feedback_noise_ratio = value,
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub variable: &'static str,
    pub value: f64,
    pub seed: u64,
    pub arp: f64,
    pub summary: EvalSummary,
    pub eval_dir: PathBuf,
}

/// Run the whole grid with up to `workers` concurrent jobs; results come back
/// ordered by (value, seed).
pub fn run_sweep(spec: &SweepSpec, out_root: &Path, workers: usize) -> Result<Vec<SweepCell>> {
    let jobs: Vec<(usize, f64, u64)> = spec
        .sweep
        .values
        .iter()
        .flat_map(|&v| spec.sweep.seeds.iter().map(move |&s| (v, s)))
        .enumerate()
        .map(|(i, (v, s))| (i, v, s))
        .collect();
    let queue: Mutex<VecDeque<(usize, f64, u64)>> = Mutex::new(jobs.iter().copied().collect());
    let results: Mutex<Vec<Option<Result<SweepCell>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((idx, value, seed)) = job else { break };
                let cell = run_cell(spec, value, seed, out_root);
                results.lock().expect("results lock")[idx] = Some(cell);
            });
        }
    });

    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("job ran"))
        .collect()
}

fn run_cell(spec: &SweepSpec, value: f64, seed: u64, out_root: &Path) -> Result<SweepCell> {
    let runs_root = out_root.join("runs");
    let variable = spec.sweep.variable;
    let cfg = if variable.affects_training() {
        spec.apply(value)?
    } else {
        spec.apply(value)? // training part equals the base; eval differs
    };

    let eval_dir = out_root.join(format!(
        "eval-{}-{}={}-s{}",
        cfg.effective_label(),
        variable.name(),
        value,
        seed
    ));

    // n_k = 0 is the no-feedback grid point: the random policy, no training
    if variable == SweepVariable::NK && value == 0.0 {
        std::fs::create_dir_all(&eval_dir)?;
        let mut cfg0 = spec.base.clone();
        cfg0.architecture.n_k = 1; // placeholder so validation passes; unused
        cfg0.validate()?;
        let arp_random = crate::commands::cmd_random_baseline(&cfg0, &eval_dir)?;
        let (oracle, random) = crate::commands::baseline_rollouts(&cfg0)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let summary = EvalSummary {
            episodes: cfg0.evaluation.episodes,
            steps_per_episode: cfg0.scenario.steps_per_episode,
            eval_seed: cfg0.evaluation.seed,
            feedback_interval: cfg0.evaluation.feedback_interval,
            input_noise_ratio: 0.0,
            feedback_noise_ratio: 0.0,
            arp_policy: arp_random,
            arp_random,
            mean_policy_return: mean(&random.returns),
            mean_oracle_return: mean(&oracle.returns),
            mean_random_return: mean(&random.returns),
        };
        return Ok(SweepCell {
            variable: variable.name(),
            value,
            seed,
            arp: arp_random,
            summary,
            eval_dir,
        });
    }

    let train_cfg = if variable.affects_training() {
        cfg.clone()
    } else {
        spec.base.clone()
    };
    let run_dir = train_or_reuse(&train_cfg, seed, &runs_root)?;
    let summary = eval_or_reuse(&cfg, &run_dir, &eval_dir)?;
    Ok(SweepCell {
        variable: variable.name(),
        value,
        seed,
        arp: summary.arp_policy,
        summary,
        eval_dir,
    })
}

/// Long-format sweep CSV plus a per-value mean/stderr JSON summary.
pub fn write_sweep_outputs(
    spec: &SweepSpec,
    cells: &[SweepCell],
    out_root: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_root)?;
    let mut csv = String::from("sweep_var,value,seed,episode,return,oracle_return,arp_component\n");
    for cell in cells {
        // re-read per-episode metrics from the eval dir when present
        let metrics = cell.eval_dir.join("metrics.csv");
        if let Ok(text) = std::fs::read_to_string(&metrics) {
            for line in text.lines().skip(1) {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() >= 3 {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        cell.variable,
                        cell.value,
                        cell.seed,
                        cols[0],
                        cols[1],
                        cols[2],
                        cols[4.min(cols.len() - 1)],
                    ));
                }
            }
        } else {
            csv.push_str(&format!(
                "{},{},{},,{},{},{}\n",
                cell.variable,
                cell.value,
                cell.seed,
                cell.summary.mean_policy_return,
                cell.summary.mean_oracle_return,
                cell.arp / 100.0
            ));
        }
    }
    let csv_path = out_root.join("sweep.csv");
    std::fs::write(&csv_path, csv)?;

    let mut per_value: Vec<serde_json::Value> = Vec::new();
    for &v in &spec.sweep.values {
        let arps: Vec<f64> = cells
            .iter()
            .filter(|c| c.value == v)
            .map(|c| c.arp)
            .collect();
        let n = arps.len() as f64;
        let mean = arps.iter().sum::<f64>() / n;
        let var = arps.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n.max(1.0);
        let stderr = if n > 1.0 {
            (var / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        per_value.push(serde_json::json!({
            "value": v,
            "mean_arp": mean,
            "stderr_arp": stderr,
            "seeds": arps.len(),
        }));
    }
    let summary = serde_json::json!({
        "variable": spec.sweep.variable.name(),
        "seeds": spec.sweep.seeds,
        "points": per_value,
    });
    std::fs::write(
        out_root.join("sweep_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(csv_path)
}
