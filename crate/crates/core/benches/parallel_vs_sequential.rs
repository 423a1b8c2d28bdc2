use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use kbridge::eval::baselines::krr_coefficients;
use kbridge::eval::cv::{cross_validate, CvPlan};
use kbridge::eval::metrics::Metric;
use kbridge::kernel::gram_with;
use kbridge::par::Execution;
use kbridge::{KernelSpec, Mat, Vector};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn normal_mat(n: usize, d: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

fn bench_gram(c: &mut Criterion) {
    let mut g = c.benchmark_group("gram");
    let k = KernelSpec::gaussian(1.0);
    for n in [250, 1000] {
        let x = normal_mat(n, 3, 1);
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &x, |b, x| b.iter(|| gram_with(exec, &k, x, x).unwrap()));
        }
    }
    g.finish();
}

fn bench_cv(c: &mut Criterion) {
    let mut g = c.benchmark_group("cv_krr");
    g.sample_size(10);
    let n = 300;
    let x = normal_mat(n, 2, 2);
    let y = Vector::from_fn(n, |i, _| x[(i, 0)].sin() + 0.1 * x[(i, 1)]);
    let k = gram_with(Execution::Sequential, &KernelSpec::gaussian(1.0), &x, &x).unwrap();
    let plan = CvPlan::new(Metric::Mse, 0).with("lambda", &[1e-4, 1e-3, 1e-2, 1e-1]);
    let block = |rows: &[usize], cols: &[usize]| Mat::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])]);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                cross_validate(
                    &y,
                    &plan,
                    exec,
                    |cell, train| {
                        let yt = Vector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
                        Ok((krr_coefficients(&block(train, train), &yt, cell["lambda"], None)?, train.to_vec()))
                    },
                    |(beta, train): &(Vector, Vec<usize>), valid| Ok(block(valid, train) * beta),
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_gram, bench_cv);
criterion_main!(benches);
