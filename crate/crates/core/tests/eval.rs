use vibnet::eval::{generate_corpus, rmse_dims, within_sd};
use vibnet::model::RatingTriple;
use vibnet::tacton::validate;

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn t(r: f64, v: f64, a: f64) -> RatingTriple {
    RatingTriple::from_array([r, v, a])
}

#[test]
fn corpus_arousal_rises_with_roughness() {
    let corpus = generate_corpus(200, 7).unwrap();
    let r: Vec<f64> = corpus.iter().map(|c| c.ratings.to_array()[0]).collect();
    let a: Vec<f64> = corpus.iter().map(|c| c.ratings.to_array()[2]).collect();
    let rho = pearson(&r, &a);
    assert!(rho > 0.0, "r(arousal, roughness) = {rho}");
}

#[test]
fn generated_specs_validate() {
    for c in generate_corpus(200, 3).unwrap() {
        let report = validate(&c.spec);
        assert!(report.valid, "{}: {:?}", c.id, report.violations);
        assert!(c.waveform.len() <= 6000);
    }
}

#[test]
fn same_seed_same_corpus() {
    let a = generate_corpus(60, 11).unwrap();
    let b = generate_corpus(60, 11).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.spec, y.spec);
        let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x.waveform.samples()), bits(y.waveform.samples()));
        assert_eq!(x.ratings, y.ratings);
    }
    let c = generate_corpus(60, 12).unwrap();
    assert!(a.iter().zip(&c).any(|(x, y)| x.ratings != y.ratings));
}

#[test]
fn rmse_is_symmetric_and_scales() {
    let p = [t(10.0, 20.0, 30.0), t(50.0, 40.0, 0.0)];
    let q = [t(13.0, 16.0, 30.0), t(50.0, 43.0, 4.0)];
    assert_eq!(rmse_dims(&p, &q).unwrap(), rmse_dims(&q, &p).unwrap());
    // Hand values: roughness sqrt(9/2), valence sqrt(25/2), arousal sqrt(16/2).
    let r = rmse_dims(&p, &q).unwrap();
    for (got, want) in r.iter().zip([4.5f64.sqrt(), 12.5f64.sqrt(), 8.0f64.sqrt()]) {
        assert!((got - want).abs() < 1e-12);
    }
    let scale = |xs: &[RatingTriple]| {
        xs.iter()
            .map(|x| RatingTriple::from_array(x.to_array().map(|v| 2.0 * v)))
            .collect::<Vec<_>>()
    };
    let r2 = rmse_dims(&scale(&p), &scale(&q)).unwrap();
    for (a, b) in r.iter().zip(r2) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
    assert_eq!(rmse_dims(&p, &p).unwrap(), [0.0; 3]);
}

#[test]
fn within_sd_shift_invariant() {
    let means = [t(10.0, 50.0, 90.0), t(30.0, 30.0, 30.0), t(60.0, 10.0, 40.0)];
    let sds = [t(5.0, 5.0, 5.0), t(2.0, 10.0, 1.0), t(8.0, 3.0, 4.0)];
    let preds = [t(14.0, 56.0, 90.0), t(31.0, 39.0, 35.0), t(60.0, 20.0, 41.0)];
    let base = within_sd(&preds, &means, &sds).unwrap();
    assert_eq!(base, [1.0, 1.0 / 3.0, 2.0 / 3.0]);
    let shift = |xs: &[RatingTriple], d: f64| {
        xs.iter()
            .map(|x| RatingTriple::from_array(x.to_array().map(|v| v + d)))
            .collect::<Vec<_>>()
    };
    assert_eq!(within_sd(&shift(&preds, 7.0), &shift(&means, 7.0), &sds).unwrap(), base);
}
