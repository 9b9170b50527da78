//! Recompute the observation-normalization constants frozen in
//! `ObsNorm::default()`.
//!
//! Rolls the default scenario under random actions and prints the mean and
//! standard deviation of each observation block in dB/dBm. Run after changing
//! the propagation model or scenario defaults, then update the constants:
//!
//! ```text
//! cargo run --release -p specshare --example calibrate_normalization
//! ```

use rand::Rng;
use specshare::env::{PropagationConfig, ScenarioConfig, V2xEnv};
use specshare::seeding::{substream, STREAM_BASELINE};

fn stats(label: &str, values: &[f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "{label}: mean {:8.2}  std {:6.2}  p1 {:8.2}  p99 {:8.2}",
        mean,
        var.sqrt(),
        sorted[(0.01 * n) as usize],
        sorted[(0.99 * n) as usize],
    );
}

fn main() {
    let scenario = ScenarioConfig::default();
    let prop = PropagationConfig::default();
    let mut env = V2xEnv::new(scenario.clone(), prop, 0xCA11B).expect("default scenario");
    let codec = env.codec();
    let mut rng = substream(0xCA11B, STREAM_BASELINE);

    let episodes = 200;
    let steps = 50;
    let mut own_db = Vec::new();
    let mut interf_dbm = Vec::new();
    let mut bs_db = Vec::new();
    let mut rewards = Vec::new();
    for episode in 0..episodes {
        env.reset(episode).expect("reset");
        for _ in 0..steps {
            for obs in env.observations() {
                own_db.extend(obs.own_gains.iter().map(|&g| 10.0 * g.max(1e-30).log10()));
                interf_dbm.extend(
                    obs.interference_mw
                        .iter()
                        .map(|&i| 10.0 * i.max(1e-30).log10()),
                );
                bs_db.extend(obs.bs_gains.iter().map(|&g| 10.0 * g.max(1e-30).log10()));
            }
            let action = codec.decode(rng.random_range(0..codec.count()));
            rewards.push(env.step(&action).reward);
        }
    }
    stats("own-channel gain  [dB]", &own_db);
    stats("interference     [dBm]", &interf_dbm);
    stats("gain to BS        [dB]", &bs_db);
    stats("random-action reward  ", &rewards);
}
