use chronofaith::attribution::{attribute, AttributionConfig, AttributionMethod};
use chronofaith::faithfulness::{aopc_record, DEFAULT_RATIOS};
use chronofaith::model::Predictor;
use chronofaith::rationale::spectra::project_budget;
use chronofaith_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn attribution_methods(c: &mut Criterion) {
    let fx = fixture(48, 4);
    let config = AttributionConfig {
        lime_samples: 200,
        ..AttributionConfig::default()
    };
    let mut group = c.benchmark_group("attribute");
    for method in AttributionMethod::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(method.name()), &method, |b, &m| {
            b.iter(|| {
                for (i, input) in fx.inputs.iter().enumerate() {
                    let target = fx.model.predict(input).predicted_class;
                    black_box(attribute(&fx.model, input, m, target, &config, &i.to_string()).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn faithfulness(c: &mut Criterion) {
    let fx = fixture(48, 4);
    let config = AttributionConfig::default();
    let maps: Vec<_> = fx
        .inputs
        .iter()
        .map(|x| {
            let t = fx.model.predict(x).predicted_class;
            attribute(&fx.model, x, AttributionMethod::ScaledAttention, t, &config, "k").unwrap()
        })
        .collect();
    c.bench_function("aopc_record", |b| {
        b.iter(|| {
            for (x, m) in fx.inputs.iter().zip(&maps) {
                black_box(aopc_record(&fx.model, x, m, &DEFAULT_RATIOS, "k").unwrap());
            }
        })
    });
}

fn projection(c: &mut Criterion) {
    let scores: Vec<f64> = (0..256).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
    c.bench_function("project_budget_256", |b| b.iter(|| black_box(project_budget(&scores, 51.0))));
}

criterion_group!(benches, attribution_methods, faithfulness, projection);
criterion_main!(benches);
