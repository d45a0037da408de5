use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sc3_bench::BatchFixture;
use sc3_core::adversary::AttackPattern;
use sc3_core::engine::{simulate_sc3, SimConfig, WorkerProfile};
use sc3_core::fountain::{compute, DataMatrix, Decoder, DegreeDist, Encoder, InputVector};
use sc3_core::hashing::{gen_params, hash, hash_combine_residues};
use sc3_core::verify::{hw_check, lw_check, multiround_lw, CostModel};

fn bench_hashing(c: &mut Criterion) {
    let params = gen_params(31, 62, 1).unwrap();
    let mut group = c.benchmark_group("hashing");
    group.bench_function("hash", |b| {
        let mut v = 0i128;
        b.iter(|| {
            v = v.wrapping_add(0x9E3779B9);
            black_box(hash(black_box(v), &params))
        });
    });
    let digests: Vec<_> = (0..256).map(|i| hash(i, &params)).collect();
    let exponents: Vec<u64> = (0..256u64).map(|i| i * 2654435761 % params.q).collect();
    group.bench_function("combine_256", |b| {
        b.iter(|| black_box(hash_combine_residues(&digests, &exponents, &params).unwrap()));
    });
    group.finish();
}

fn bench_checks(c: &mut Criterion) {
    let params = gen_params(31, 62, 2).unwrap();
    let fixture = BatchFixture::honest(64, 64, params, 7);
    let batch = fixture.batch();
    let mut group = c.benchmark_group("checks_z64_c64");
    group.bench_function("lw", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| black_box(lw_check(&batch, &params, &mut rng)));
    });
    group.bench_function("hw", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| black_box(hw_check(&batch, &params, &mut rng)));
    });
    group.bench_function("multiround_31", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| black_box(multiround_lw(&batch, 31, &params, &mut rng)));
    });
    group.finish();
}

fn bench_fountain(c: &mut Criterion) {
    let mut group = c.benchmark_group("fountain");
    let q = (1u64 << 31) - 1;
    let matrix = DataMatrix::random(1024, 64, q, 3);
    group.bench_function("encode_r1024", |b| {
        let mut encoder = Encoder::new(1024, &DegreeDist::default(), 5);
        b.iter(|| black_box(encoder.encode_next(&matrix)));
    });
    let small = DataMatrix::random(256, 16, q, 4);
    let x = InputVector::random(16, q, 5);
    group.bench_function("decode_r256", |b| {
        b.iter(|| {
            let mut encoder = Encoder::new(256, &DegreeDist::DenseUniform, 6);
            let mut decoder = Decoder::new(256, q);
            while !decoder.is_complete() {
                let packet = encoder.encode_next(&small);
                let value = compute(&packet, &x).unwrap();
                decoder.feed(&packet.gamma, value).unwrap();
            }
            black_box(decoder.solve().unwrap())
        });
    });
    group.finish();
}

fn bench_engine(c: &mut Criterion) {
    let params = gen_params(31, 62, 8).unwrap();
    let workers: Vec<WorkerProfile> = (0..6)
        .map(|id| {
            if id < 2 {
                WorkerProfile::malicious(id, 0.5, 1.0, AttackPattern::random_additive(0.3))
            } else {
                WorkerProfile::honest(id, 0.5, 1.0)
            }
        })
        .collect();
    let cfg = SimConfig {
        rows: 60,
        cols: 16,
        epsilon: 3,
        params,
        degree: DegreeDist::default(),
        workers,
        cost_model: CostModel::schoolbook(&params),
    };
    let mut group = c.benchmark_group("engine");
    group.sample_size(20);
    group.bench_function("sc3_r60_n6", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(simulate_sc3(&cfg, seed).unwrap())
        });
    });
    group.finish();
}

criterion_group!(benches, bench_hashing, bench_checks, bench_fountain, bench_engine);
criterion_main!(benches);
