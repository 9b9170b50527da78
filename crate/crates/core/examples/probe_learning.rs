// Temporary development probe: step timing and a short learning run.
use specshare::dqn::cdecision::{test_c_decision, train_c_decision, CArch};
use specshare::dqn::{EpsilonSchedule, NoiseCfg, TrainParams};
use specshare::env::{PropagationConfig, ScenarioConfig, V2xEnv};
use specshare::eval::{arp, oracle_rollout, random_rollout};
use specshare::seeding::{substream, STREAM_BASELINE, STREAM_NOISE};
use std::time::Instant;

fn main() {
    specshare::set_blas_threads(1);
    println!("blas core: {:?}", specshare::blas_core_name());
    let episodes: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(60);

    let scenario = ScenarioConfig {
        steps_per_episode: 200,
        ..ScenarioConfig::default()
    };
    let arch = CArch::default();
    let params = TrainParams {
        episodes,
        steps_per_episode: 200,
        epsilon: EpsilonSchedule {
            start: 1.0,
            end: 0.01,
            anneal_episodes: 1600,
        },
        ..TrainParams::default()
    };
    let seed = 1u64;
    let mut env = V2xEnv::new(scenario.clone(), PropagationConfig::default(), seed).unwrap();

    let t0 = Instant::now();
    let mut last = Instant::now();
    let (bundle, log) = train_c_decision::<f32, _>(
        &mut env,
        &arch,
        &params,
        seed,
        0,
        None,
        |row, _| {
            if row.episode % 10 == 9 || row.episode < 3 {
                println!(
                    "ep {:4}  loss {:10.4}  eps {:.3}  return {:9.1}  ({:.2?}/ep)",
                    row.episode,
                    row.mean_loss,
                    row.epsilon,
                    row.episode_return,
                    last.elapsed() / 10
                );
                last = Instant::now();
            }
            Ok(())
        },
    )
    .unwrap();
    println!("trained {} episodes in {:.1?}", log.len(), t0.elapsed());

    // paired evaluation
    let eval_seed = 0xE7A1u64;
    let test_eps = 20;
    let steps = 200;
    let mut env_p = V2xEnv::new(scenario.clone(), PropagationConfig::default(), eval_seed).unwrap();
    let mut rng_noise = substream(eval_seed, STREAM_NOISE);
    let policy = test_c_decision(
        &bundle, &mut env_p, test_eps, steps, 1, &NoiseCfg::default(), &mut rng_noise, false,
    )
    .unwrap();
    let mut env_o = V2xEnv::new(scenario.clone(), PropagationConfig::default(), eval_seed).unwrap();
    let t1 = Instant::now();
    let oracle = oracle_rollout(&mut env_o, test_eps, steps, false).unwrap();
    println!("oracle rollout: {:.1?}", t1.elapsed());
    let mut env_r = V2xEnv::new(scenario, PropagationConfig::default(), eval_seed).unwrap();
    let mut rng_b = substream(eval_seed, STREAM_BASELINE);
    let random = random_rollout(&mut env_r, test_eps, steps, &mut rng_b, false).unwrap();

    println!(
        "ARP policy {:.1}%   random {:.1}%",
        arp(&policy.returns, &oracle.returns).unwrap(),
        arp(&random.returns, &oracle.returns).unwrap()
    );
}
