//! Command implementations: train, eval, baselines.
//!
//! Training writes a content-addressed run directory with the resolved
//! config, a per-episode CSV log, periodic checkpoints and a final one.
//! Evaluation rolls the trained policy, the brute-force oracle and the
//! random baseline over identical channel traces (shared evaluation seed)
//! and writes per-episode metrics plus a JSON summary.

use crate::config::{RunConfig, Scheme};
use crate::manifest::{
    self, is_complete, latest_periodic, run_dir, RunManifest, CHECKPOINT_DIR,
    FINAL_CHECKPOINT_FILE, MANIFEST_FILE, RESOLVED_CONFIG_FILE, TRAIN_LOG_FILE,
};
use anyhow::{anyhow, bail, Context, Result};
use specshare::dqn::bundle_io::{load_bundle_c, load_bundle_d, save_bundle_c, save_bundle_d};
use specshare::dqn::cdecision::{test_c_decision, train_c_decision, AgentBundleC};
use specshare::dqn::ddecision::{test_d_decision, train_d_decision, AgentBundleD};
use specshare::dqn::{EpisodeLog, NoiseCfg};
use specshare::env::V2xEnv;
use specshare::eval::{arp, oracle_rollout, random_rollout, sum_rate_cdf, RolloutTrace};
use specshare::seeding::{substream, STREAM_BASELINE, STREAM_NOISE};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Production element type: 32-bit floats (gradient verification runs the
/// same code paths at 64-bit in the test suites).
pub type Elem = f32;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

enum Trained {
    C(AgentBundleC<Elem>),
    D(AgentBundleD<Elem>),
}

/// Train per the configured scheme into a content-addressed run directory.
///
/// Never mutates a completed run: reinvoking with the same config and seed
/// either errors (default) or returns the existing directory (`resume`,
/// which also continues interrupted runs from their latest periodic
/// checkpoint with a refilled replay buffer).
pub fn cmd_train(cfg: &RunConfig, seed: u64, out_root: &Path, resume: bool) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = run_dir(out_root, cfg, seed);
    if is_complete(&dir) {
        if resume {
            return Ok(dir);
        }
        bail!(
            "run directory {} already holds a completed run (identical config and seed); \
             pass --resume to reuse it",
            dir.display()
        );
    }
    let start_from = if dir.exists() {
        if !resume {
            bail!(
                "run directory {} exists but is incomplete; pass --resume to continue it",
                dir.display()
            );
        }
        latest_periodic(&dir)
    } else {
        None
    };
    std::fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    write_atomic(
        &dir.join(RESOLVED_CONFIG_FILE),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )?;

    let params = cfg.train_params();
    let mut env = V2xEnv::new(cfg.scenario.clone(), cfg.propagation.clone(), seed)?;
    let log_path = dir.join(TRAIN_LOG_FILE);
    let mut log_file = if start_from.is_some() && log_path.exists() {
        BufWriter::new(File::options().append(true).open(&log_path)?)
    } else {
        let mut f = BufWriter::new(File::create(&log_path)?);
        writeln!(f, "episode,mean_loss,epsilon,return")?;
        f
    };
    let checkpoint_every = cfg.training.checkpoint_every;
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    let t0 = Instant::now();

    let log_row = |row: &EpisodeLog, file: &mut BufWriter<File>| -> Result<()> {
        writeln!(
            file,
            "{},{},{},{}",
            row.episode, row.mean_loss, row.epsilon, row.episode_return
        )?;
        file.flush()?;
        Ok(())
    };

    let (trained, episodes_done) = match cfg.architecture.scheme {
        Scheme::CDecision => {
            let (bundle, start_episode) = match &start_from {
                Some(path) => {
                    let mut f = File::open(path)?;
                    let (b, done) = load_bundle_c::<Elem, _>(&mut f, params.buffer_capacity)?;
                    (Some(b), done)
                }
                None => (None, 0),
            };
            let (bundle, _) = train_c_decision::<Elem, _>(
                &mut env,
                &cfg.c_arch(),
                &params,
                seed,
                start_episode,
                bundle,
                |row, bundle| {
                    log_row(row, &mut log_file).map_err(to_cb)?;
                    if (row.episode + 1) % checkpoint_every == 0 {
                        let mut bytes = Vec::new();
                        save_bundle_c(bundle, row.episode + 1, &mut bytes)?;
                        write_atomic(
                            &ckpt_dir.join(format!("ep{:06}.ssb", row.episode + 1)),
                            &bytes,
                        )
                        .map_err(to_cb)?;
                    }
                    Ok(())
                },
            )?;
            let e = params.episodes;
            (Trained::C(bundle), e)
        }
        Scheme::DDecision => {
            let (bundle, start_episode) = match &start_from {
                Some(path) => {
                    let mut f = File::open(path)?;
                    let (b, done) = load_bundle_d::<Elem, _>(&mut f, params.buffer_capacity)?;
                    (Some(b), done)
                }
                None => (None, 0),
            };
            let (bundle, _) = train_d_decision::<Elem, _>(
                &mut env,
                &cfg.d_arch(),
                &params,
                seed,
                start_episode,
                bundle,
                |row, bundle| {
                    log_row(row, &mut log_file).map_err(to_cb)?;
                    if (row.episode + 1) % checkpoint_every == 0 {
                        let mut bytes = Vec::new();
                        save_bundle_d(bundle, row.episode + 1, &mut bytes)?;
                        write_atomic(
                            &ckpt_dir.join(format!("ep{:06}.ssb", row.episode + 1)),
                            &bytes,
                        )
                        .map_err(to_cb)?;
                    }
                    Ok(())
                },
            )?;
            let e = params.episodes;
            (Trained::D(bundle), e)
        }
    };

    let mut bytes = Vec::new();
    match &trained {
        Trained::C(b) => save_bundle_c(b, episodes_done, &mut bytes)?,
        Trained::D(b) => save_bundle_d(b, episodes_done, &mut bytes)?,
    }
    write_atomic(&dir.join(FINAL_CHECKPOINT_FILE), &bytes)?;

    let manifest = RunManifest {
        tool_version: manifest::version_string(),
        seed,
        config: cfg.clone(),
        episodes_trained: episodes_done,
        wall_clock_s: t0.elapsed().as_secs_f64(),
        files: vec![
            RESOLVED_CONFIG_FILE.into(),
            TRAIN_LOG_FILE.into(),
            FINAL_CHECKPOINT_FILE.into(),
            MANIFEST_FILE.into(),
        ],
    };
    manifest.write(&dir)?;
    Ok(dir)
}

fn to_cb(e: anyhow::Error) -> specshare::dqn::DqnError {
    specshare::dqn::DqnError::Callback(e.to_string())
}

/// Evaluation artifacts and headline metrics.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub eval_seed: u64,
    pub feedback_interval: usize,
    pub input_noise_ratio: f64,
    pub feedback_noise_ratio: f64,
    pub arp_policy: f64,
    pub arp_random: f64,
    pub mean_policy_return: f64,
    pub mean_oracle_return: f64,
    pub mean_random_return: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn checkpoint_path(run_or_ckpt: &Path) -> PathBuf {
    if run_or_ckpt.is_dir() {
        run_or_ckpt.join(FINAL_CHECKPOINT_FILE)
    } else {
        run_or_ckpt.to_path_buf()
    }
}

/// Roll a trained policy over the configured evaluation protocol.
pub fn policy_rollout(
    cfg: &RunConfig,
    run_or_ckpt: &Path,
    record_steps: bool,
) -> Result<RolloutTrace> {
    let ckpt = checkpoint_path(run_or_ckpt);
    let mut file = File::open(&ckpt).with_context(|| format!("opening {}", ckpt.display()))?;
    let steps = cfg.scenario.steps_per_episode;
    let eval = &cfg.evaluation;
    let noise = NoiseCfg {
        input_ratio: eval.input_noise_ratio,
        feedback_ratio: eval.feedback_noise_ratio,
    };
    let mut env = V2xEnv::new(cfg.scenario.clone(), cfg.propagation.clone(), eval.seed)?;
    let mut rng_noise = substream(eval.seed, STREAM_NOISE);
    let trace = match cfg.architecture.scheme {
        Scheme::CDecision => {
            let (bundle, _) =
                load_bundle_c::<Elem, _>(&mut file, cfg.training.buffer_capacity.min(1))?;
            let want = cfg.c_arch();
            if bundle.arch != want {
                bail!(
                    "checkpoint architecture does not match the config:\n  checkpoint: {:?}\n  \
                     config:     {:?}",
                    bundle.arch,
                    want
                );
            }
            test_c_decision(
                &bundle,
                &mut env,
                eval.episodes,
                steps,
                eval.feedback_interval,
                &noise,
                &mut rng_noise,
                record_steps,
            )?
        }
        Scheme::DDecision => {
            let (bundle, _) =
                load_bundle_d::<Elem, _>(&mut file, cfg.training.buffer_capacity.min(1))?;
            let want = cfg.d_arch();
            if bundle.arch != want {
                bail!(
                    "checkpoint architecture does not match the config:\n  checkpoint: {:?}\n  \
                     config:     {:?}",
                    bundle.arch,
                    want
                );
            }
            test_d_decision(
                &bundle,
                &mut env,
                eval.episodes,
                steps,
                eval.feedback_interval,
                &noise,
                &mut rng_noise,
                record_steps,
            )?
        }
    };
    Ok(trace)
}

/// Oracle and random rollouts over the evaluation protocol's channel traces.
pub fn baseline_rollouts(cfg: &RunConfig) -> Result<(RolloutTrace, RolloutTrace)> {
    let steps = cfg.scenario.steps_per_episode;
    let eval = &cfg.evaluation;
    let mut env_o = V2xEnv::new(cfg.scenario.clone(), cfg.propagation.clone(), eval.seed)?;
    let oracle = oracle_rollout(&mut env_o, eval.episodes, steps, false)?;
    let mut env_r = V2xEnv::new(cfg.scenario.clone(), cfg.propagation.clone(), eval.seed)?;
    let mut rng = substream(eval.seed, STREAM_BASELINE);
    let random = random_rollout(&mut env_r, eval.episodes, steps, &mut rng, false)?;
    Ok((oracle, random))
}

/// Evaluate a checkpoint against the oracle and random baselines; writes
/// `metrics.csv`, `summary.json`, the sum-rate `cdf.csv` and, on request, a
/// per-step `trace.csv`.
pub fn cmd_eval(
    cfg: &RunConfig,
    run_or_ckpt: &Path,
    out_dir: &Path,
    trace_steps: bool,
) -> Result<EvalSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let policy = policy_rollout(cfg, run_or_ckpt, trace_steps)?;
    let (oracle, random) = baseline_rollouts(cfg)?;

    let mut csv = String::from("episode,policy_return,oracle_return,random_return,normalized_policy,normalized_random\n");
    for e in 0..policy.returns.len() {
        let (p, o, r) = (policy.returns[e], oracle.returns[e], random.returns[e]);
        csv.push_str(&format!("{e},{p},{o},{r},{},{}\n", p / o, r / o));
    }
    write_atomic(&out_dir.join("metrics.csv"), csv.as_bytes())?;

    let mut cdf_csv = String::from("series,rate,quantile\n");
    for (series, samples) in [
        ("policy:v2i", &policy.v2i_sum_rates),
        ("policy:v2v", &policy.v2v_sum_rates),
        ("oracle:v2i", &oracle.v2i_sum_rates),
        ("oracle:v2v", &oracle.v2v_sum_rates),
        ("random:v2i", &random.v2i_sum_rates),
        ("random:v2v", &random.v2v_sum_rates),
    ] {
        for (rate, q) in thin_cdf(&sum_rate_cdf(samples)) {
            cdf_csv.push_str(&format!("{series},{rate},{q}\n"));
        }
    }
    write_atomic(&out_dir.join("cdf.csv"), cdf_csv.as_bytes())?;

    if trace_steps {
        let mut t = String::from("episode,step,action,reward,v2i_rates,v2v_rates\n");
        for s in &policy.steps {
            let v2i = s
                .v2i_rates
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let v2v = s
                .v2v_rates
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            t.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.episode, s.step, s.action, s.reward, v2i, v2v
            ));
        }
        write_atomic(&out_dir.join("trace.csv"), t.as_bytes())?;
    }

    let summary = EvalSummary {
        episodes: cfg.evaluation.episodes,
        steps_per_episode: cfg.scenario.steps_per_episode,
        eval_seed: cfg.evaluation.seed,
        feedback_interval: cfg.evaluation.feedback_interval,
        input_noise_ratio: cfg.evaluation.input_noise_ratio,
        feedback_noise_ratio: cfg.evaluation.feedback_noise_ratio,
        arp_policy: arp(&policy.returns, &oracle.returns)?,
        arp_random: arp(&random.returns, &oracle.returns)?,
        mean_policy_return: mean(&policy.returns),
        mean_oracle_return: mean(&oracle.returns),
        mean_random_return: mean(&random.returns),
    };
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(summary)
}

/// Keep at most 1024 evenly spaced points of an empirical CDF.
fn thin_cdf(cdf: &[(f64, f64)]) -> Vec<(f64, f64)> {
    const MAX_POINTS: usize = 1024;
    if cdf.len() <= MAX_POINTS {
        return cdf.to_vec();
    }
    let stride = cdf.len() as f64 / MAX_POINTS as f64;
    (0..MAX_POINTS)
        .map(|i| cdf[((i as f64 + 1.0) * stride) as usize - 1])
        .chain(std::iter::once(*cdf.last().expect("nonempty")))
        .collect()
}

/// Per-step brute-force-optimal allocation over the evaluation protocol;
/// writes per-episode returns.
pub fn cmd_oracle_baseline(cfg: &RunConfig, out_dir: &Path) -> Result<f64> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let (oracle, _) = baseline_rollouts(cfg)?;
    let mut csv = String::from("episode,oracle_return\n");
    for (e, r) in oracle.returns.iter().enumerate() {
        csv.push_str(&format!("{e},{r}\n"));
    }
    write_atomic(&out_dir.join("oracle.csv"), csv.as_bytes())?;
    let m = mean(&oracle.returns);
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "episodes": cfg.evaluation.episodes,
            "eval_seed": cfg.evaluation.seed,
            "mean_oracle_return": m,
            "arp_oracle_vs_self": 100.0,
        }))?
        .as_bytes(),
    )?;
    Ok(m)
}

/// Uniform random allocation over the evaluation protocol, normalized by the
/// oracle on the same channel traces.
pub fn cmd_random_baseline(cfg: &RunConfig, out_dir: &Path) -> Result<f64> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let (oracle, random) = baseline_rollouts(cfg)?;
    let mut csv = String::from("episode,random_return,oracle_return,normalized\n");
    for e in 0..random.returns.len() {
        let (r, o) = (random.returns[e], oracle.returns[e]);
        csv.push_str(&format!("{e},{r},{o},{}\n", r / o));
    }
    write_atomic(&out_dir.join("random.csv"), csv.as_bytes())?;
    let a = arp(&random.returns, &oracle.returns)?;
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "episodes": cfg.evaluation.episodes,
            "eval_seed": cfg.evaluation.seed,
            "arp_random": a,
            "mean_random_return": mean(&random.returns),
            "mean_oracle_return": mean(&oracle.returns),
        }))?
        .as_bytes(),
    )?;
    Ok(a)
}

/// Train if the content-addressed run directory has no completed run yet;
/// reuse it otherwise.
pub fn train_or_reuse(cfg: &RunConfig, seed: u64, out_root: &Path) -> Result<PathBuf> {
    cmd_train(cfg, seed, out_root, true)
}

/// Evaluate into `out_dir` unless a summary already exists there (the
/// evaluation protocol is deterministic, so an existing summary is exact).
pub fn eval_or_reuse(
    cfg: &RunConfig,
    run_or_ckpt: &Path,
    out_dir: &Path,
) -> Result<EvalSummary> {
    let summary_path = out_dir.join("summary.json");
    if summary_path.exists() {
        let text = std::fs::read_to_string(&summary_path)?;
        let summary: serde_json::Value = serde_json::from_str(&text)?;
        return serde_json::from_value(summary)
            .map_err(|e| anyhow!("unreadable cached summary {}: {e}", summary_path.display()));
    }
    cmd_eval(cfg, run_or_ckpt, out_dir, false)
}
