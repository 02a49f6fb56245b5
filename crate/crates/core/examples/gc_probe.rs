fn main() {
    let mut results: Vec<(f64, u64)> = Vec::new();
    for seed in 1u64..=30 {
        let report = orn_core::model::micro_grad_check(5e-5, seed).unwrap();
        println!("seed {seed}: {:.3e} ({:?})", report.max_rel_error, report.worst);
        results.push((report.max_rel_error, seed));
    }
    results.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    println!("BEST: {:?}", &results[..5]);
}
