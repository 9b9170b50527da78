// Temporary development probe: random-vs-oracle gap and geometry stats.
use specshare::env::{reward_breakdown, PropagationConfig, ScenarioConfig, V2xEnv};
use specshare::eval::{arp, oracle_rollout, random_rollout};
use specshare::oracle::brute_force_allocate;
use specshare::seeding::{substream, STREAM_BASELINE};

fn main() {
    let scenario = ScenarioConfig {
        steps_per_episode: 200,
        ..ScenarioConfig::default()
    };
    let eval_seed = 0xE7A1u64;
    let eps = 100;
    let steps = 200;

    let mut env_o = V2xEnv::new(scenario.clone(), PropagationConfig::default(), eval_seed).unwrap();
    let oracle = oracle_rollout(&mut env_o, eps, steps, false).unwrap();
    let mut env_r = V2xEnv::new(scenario.clone(), PropagationConfig::default(), eval_seed).unwrap();
    let mut rng_b = substream(eval_seed, STREAM_BASELINE);
    let random = random_rollout(&mut env_r, eps, steps, &mut rng_b, false).unwrap();
    println!(
        "random ARP over {} episodes: {:.2}%",
        eps,
        arp(&random.returns, &oracle.returns).unwrap()
    );
    let mv2i: f64 = random.v2i_sum_rates.iter().sum::<f64>() / random.v2i_sum_rates.len() as f64;
    let ov2i: f64 = oracle.v2i_sum_rates.iter().sum::<f64>() / oracle.v2i_sum_rates.len() as f64;
    let mv2v: f64 = random.v2v_sum_rates.iter().sum::<f64>() / random.v2v_sum_rates.len() as f64;
    let ov2v: f64 = oracle.v2v_sum_rates.iter().sum::<f64>() / oracle.v2v_sum_rates.len() as f64;
    println!("v2i sum rate: random {mv2i:.2} oracle {ov2i:.2} ({:.1}%)", mv2i / ov2i * 100.0);
    println!("v2v sum rate: random {mv2v:.2} oracle {ov2v:.2} ({:.1}%)", mv2v / ov2v * 100.0);

    // geometry + per-step detail on a few episodes
    let mut env = V2xEnv::new(scenario.clone(), PropagationConfig::default(), eval_seed).unwrap();
    for ep in 0..3 {
        env.reset(ep).unwrap();
        let topo = env.topology();
        let d_pair: Vec<f64> = topo
            .tx
            .iter()
            .zip(topo.rx.iter())
            .map(|(t, r)| ((t.pose.x - r.pose.x).powi(2) + (t.pose.y - r.pose.y).powi(2)).sqrt())
            .collect();
        println!("ep {ep}: pair distances {:?}", d_pair.iter().map(|d| d.round()).collect::<Vec<_>>());
        let re = env.realization();
        let radio = env.radio();
        let codec = env.codec();
        let (best, best_r) = brute_force_allocate(re, radio, &codec).unwrap();
        let worst = (0..codec.count())
            .map(|i| reward_breakdown(re, radio, &codec.decode(i)).total)
            .fold(f64::INFINITY, f64::min);
        let mean = (0..codec.count())
            .map(|i| reward_breakdown(re, radio, &codec.decode(i)).total)
            .sum::<f64>()
            / codec.count() as f64;
        println!(
            "  step0: best {:.1} (action {:?}) mean {:.1} worst {:.1}",
            best_r, best.channels, mean, worst
        );
    }
}
