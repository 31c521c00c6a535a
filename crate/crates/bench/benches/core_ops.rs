use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use warmline_bench::{bundle, featurizer, MESSAGE};
use warmline_core::dialogue::{respond, DialogueContext, FixedClock};
use warmline_core::evaluation::{token_similarity, HashedContextEmbedder};
use warmline_core::{Detectors, Engine, ResponsePools, Session};

fn featurize(c: &mut Criterion) {
    let f = featurizer(384);
    c.bench_function("featurize/384", |b| b.iter(|| f.featurize(black_box(MESSAGE)).unwrap()));
}

fn detect(c: &mut Criterion) {
    let bundle = bundle(100);
    c.bench_function("bundle_detect/3x100_trees", |b| b.iter(|| bundle.detect(black_box(MESSAGE)).unwrap()));
}

fn similarity(c: &mut Criterion) {
    let e = HashedContextEmbedder::new(64);
    let reference = "That sounds so hard, and it makes sense that you feel worn out by all of it.";
    c.bench_function("token_similarity/64", |b| {
        b.iter(|| token_similarity(black_box(MESSAGE), black_box(reference), &e).unwrap())
    });
}

fn turn(c: &mut Criterion) {
    let bundle = bundle(50);
    let pools = ResponsePools::builtin();
    let clock = FixedClock::default();
    let ctx = DialogueContext::new(&bundle, &pools, &clock);
    c.bench_function("respond/rule_based", |b| {
        b.iter(|| {
            let mut s = Session::new("bench", Engine::RuleBased, 1, String::new());
            respond(&mut s, black_box(MESSAGE), &ctx).unwrap()
        })
    });
}

criterion_group!(benches, featurize, detect, similarity, turn);
criterion_main!(benches);
