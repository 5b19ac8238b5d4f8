use avb::autodiff::{ParamSet, Tape};
use avb::networks::{Activation, Init, Mlp, MlpSpec};
use avb_bench::random_matrix;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matmul_backward(c: &mut Criterion) {
    let a = random_matrix(64, 784, 1);
    let b = random_matrix(784, 128, 2);
    c.bench_function("matmul 64x784x128 forward+backward", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let av = tape.leaf(a.clone());
            let bv = tape.leaf(b.clone());
            let y = tape.matmul(av, bv).unwrap();
            let s = tape.sum(y);
            tape.backward(s).unwrap()
        })
    });
}

fn mlp_backward(c: &mut Criterion) {
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = MlpSpec::new(784, 128, 2, 16, Activation::Elu);
    let net = Mlp::new(&mut params, "mlp", spec, Init::GlorotUniform, &mut rng).unwrap();
    let x = random_matrix(64, 784, 4);
    c.bench_function("mlp 784-128-128-16 forward+backward, batch 64", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let b = tape.bind(&params);
            let xv = tape.constant(x.clone());
            let y = net.forward(&mut tape, &b, xv).unwrap();
            let s = tape.sum(y);
            tape.backward(s).unwrap().for_bound(&b)
        })
    });
}

criterion_group!(benches, matmul_backward, mlp_backward);
criterion_main!(benches);
