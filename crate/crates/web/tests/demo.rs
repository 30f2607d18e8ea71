// SPDX-License-Identifier: MIT OR Apache-2.0

use paramcpd::ParamKind;
use paramcpd_web::{score, segment, simulate, MAX_LEN};

#[test]
fn simulated_series_is_piecewise() {
    let s = simulate(ParamKind::Rho, 4, 300, 0.01, 7).unwrap();
    assert_eq!(s.x.len(), 1200);
    assert_eq!(s.parameter.len(), 1200);
    assert_eq!(s.truth, vec![300, 600, 900]);
    for (k, chunk) in s.parameter.chunks(300).enumerate() {
        assert!(chunk.iter().all(|&v| v == chunk[0]));
        // Low and high ranges alternate, starting low.
        assert_eq!(chunk[0] > 32.0, k % 2 == 1, "segment {k}: {}", chunk[0]);
    }
    assert_eq!(simulate(ParamKind::Rho, 4, 300, 0.01, 7).unwrap(), s);
    assert!(simulate(ParamKind::Beta, 100, 1000, 0.01, 1).is_err());
    const { assert!(MAX_LEN >= 9600) };
    assert!(simulate(ParamKind::Beta, 2, 100, -1.0, 1).is_err());
}

#[test]
fn segmentation_responds_to_penalty() {
    let mut x = vec![0.0; 150];
    x.extend(vec![5.0; 150]);
    let step = segment(&x, 1.0, 20, 1).unwrap();
    assert_eq!(step.breakpoints, vec![150]);
    assert_eq!(step.signal.len(), 300);

    let s = simulate(ParamKind::Sigma, 3, 400, 0.01, 3).unwrap();
    let counts: Vec<usize> = [0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&c| segment(&s.x, c, 20, 5).unwrap().breakpoints.len())
        .collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    assert!(segment(&x, -1.0, 20, 1).is_err());
}

#[test]
fn scoring_curve() {
    let pts = score(&[95, 400, 610], &[100, 600], 1000, &[2, 10, 20]).unwrap();
    let f1: Vec<f64> = pts.iter().map(|p| p.f1).collect();
    assert_eq!(f1, vec![0.0, 0.8, 0.8]);
    assert_eq!(pts[1].mae_steps, Some(7.5));
    assert_eq!(pts[1].fp_per_1000, 1.0);
    assert!(score(&[3, 1], &[], 10, &[1]).is_err());
}

#[test]
fn json_shape() {
    let s = serde_json::to_value(simulate(ParamKind::Beta, 2, 100, 0.0, 1).unwrap()).unwrap();
    assert_eq!(s["kind"], "beta");
    assert_eq!(s["truth"], serde_json::json!([100]));
}
