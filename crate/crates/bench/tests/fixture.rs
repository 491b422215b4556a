use chronofaith::model::Predictor;
use chronofaith_bench::fixture;

#[test]
fn fixture_inputs_fit_the_model() {
    let fx = fixture(24, 5);
    assert_eq!(fx.inputs.len(), 5);
    for x in &fx.inputs {
        assert!(x.token_ids.len() <= 24);
        let p = fx.model.predict(x);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
