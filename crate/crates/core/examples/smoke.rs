use qpnn_core::optim::TrainConfig;
use qpnn_core::tasks::*;
use std::time::Instant;

fn main() {
    for seed in [7u64, 42] {
        let t0 = Instant::now();
        let cfg = TrainConfig { seed, ..Default::default() };
        let code = binomial_code(3).unwrap();
        let cz = train_logical_cz(&code, 5, &cfg, TrainProtocol::new(3, 1)).unwrap();
        println!("root seed {seed}: gate {:.10} ({:?})", cz.gate_fidelity, t0.elapsed());
    }
}
