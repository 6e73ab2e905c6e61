use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use schemagraph::encoder::{ConceptVocab, EncoderKind};
use schemagraph::kg::ConceptId;
use schemagraph::model::{Example, Model, TrainConfig};
use schemagraph::random::{random_kg, random_schema_graph, random_vector};
use schemagraph::schema::{enumerate_paths, ExtractionConfig};

fn paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_paths");
    for (n, m) in [(200, 800), (2000, 10000)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kg = random_kg(&mut rng, n, m, 5);
        let q: BTreeSet<ConceptId> = (0..5).map(ConceptId).collect();
        let a: BTreeSet<ConceptId> = (5..8).map(ConceptId).collect();
        for k in [2, 3] {
            let cfg = ExtractionConfig { k, max_paths_per_pair: 100 };
            group.bench_with_input(BenchmarkId::new(format!("n{n}_m{m}"), k), &cfg, |b, cfg| {
                b.iter(|| enumerate_paths(&kg, black_box(&q), black_box(&a), cfg))
            });
        }
    }
    group.finish();
}

fn encoders(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let relations = 6;
    let sg = random_schema_graph(&mut rng, 20, 40, relations as u32, 30);
    let cfg0 = TrainConfig::default();
    let s = random_vector(&mut rng, cfg0.d_s);
    let ex = Example {
        statement_id: "q-A".into(),
        choice_label: "A".into(),
        s: s.clone(),
        graph: sg.clone(),
        label: Some(true),
    };
    let mut group = c.benchmark_group("encoder");
    for kind in [EncoderKind::Kagnet, EncoderKind::Mhgrn] {
        let cfg = TrainConfig { encoder: kind, ..cfg0.clone() };
        let model = Model::new(cfg, ConceptVocab::from_graphs([&sg]), relations).unwrap();
        group.bench_function(format!("{kind}_forward"), |b| b.iter(|| model.score(black_box(&s), &sg).unwrap()));
        group.bench_function(format!("{kind}_forward_backward"), |b| {
            b.iter(|| model.loss_and_grads(black_box(&ex)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, paths, encoders);
criterion_main!(benches);
