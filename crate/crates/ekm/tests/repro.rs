// debug reproduction
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ekm::data::LabeledExample;
use ekm::fitness::{dissimilarity_sq, fitness, margin};
use ekm::gp::{init_population, GpConfig};
use ekm::kernel::KernelExpr;

fn random_kernels(n: usize, d: usize, max_init_depth: usize, seed: u64) -> Vec<KernelExpr> {
    let cfg = GpConfig { population_size: n, init_depth_range: (2, max_init_depth), ..GpConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_population(&cfg, d, &mut rng).into_iter().map(|ind| ind.expr).collect()
}
fn random_point<R: Rng>(d: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}
fn random_example<R: Rng>(d: usize, classes: usize, source_index: usize, rng: &mut R) -> LabeledExample {
    LabeledExample { features: random_point(d, 5.0, rng), label: rng.random_range(0..classes), source_index }
}

#[test]
fn repro() {
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for d in 1usize..=4 {
        let kernels = random_kernels(125, d, 5, 322 + d as u64);
        for (i, kernel) in kernels.iter().enumerate() {
            let classes = 2 + i % 2;
            let l = rng.random_range(2..=10);
            let m = rng.random_range(1..=10);
            let protos: Vec<LabeledExample> = (0..l).map(|j| random_example(d, classes, j, &mut rng)).collect();
            let cases: Vec<LabeledExample> = (0..m).map(|j| {
                let src = if rng.random_bool(0.3) { rng.random_range(0..l) } else { l + j };
                random_example(d, classes, src, &mut rng)
            }).collect();
            let got = fitness(kernel, &protos, &cases);
            // oracle
            let mut total = 0.0;
            for e in &cases {
                let mut order: Vec<(f64, usize, usize)> = protos.iter()
                    .filter(|p| p.source_index != e.source_index)
                    .map(|p| (dissimilarity_sq(kernel, &e.features, &p.features).unwrap(), p.source_index, p.label))
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let sentinel = protos.len() + 1;
                let p_rank = order.iter().position(|o| o.2 == e.label).map_or(sentinel, |x| x + 1) as f64;
                let n_rank = order.iter().position(|o| o.2 != e.label).map_or(sentinel, |x| x + 1) as f64;
                total += n_rank - p_rank;
                let rec = margin(kernel, &protos, e);
                if (rec.p_rank as f64, rec.n_rank as f64) != (p_rank, n_rank) {
                    eprintln!("MISMATCH kernel={kernel} e.label={} e.src={} protos={:?}",
                        e.label, e.source_index,
                        protos.iter().map(|p| (p.source_index, p.label)).collect::<Vec<_>>());
                    eprintln!("  impl p={} n={}  oracle p={} n={}", rec.p_rank, rec.n_rank, p_rank, n_rank);
                    let ds: Vec<f64> = protos.iter().map(|p| dissimilarity_sq(kernel, &e.features, &p.features).unwrap()).collect();
                    eprintln!("  d2s = {ds:?}");
                    panic!("first mismatch");
                }
            }
            let want = total / cases.len() as f64 - protos.len() as f64;
            assert!((got - want).abs() <= 1e-12, "fitness {got} != oracle {want} for {kernel}");
        }
    }
}
