use std::f64::consts::PI;

use eon_core::qot::{
    apparent_osnr, ase_density, link_osnr, link_osnr_approx, noise_enhancement, nonlinear_threshold,
    optimal_launch_density, osnr_db_for, FiberParams,
};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Independent transcription of the link model, straight in SI units.
fn reference_osnr(p: &FiberParams, ns: f64) -> (f64, f64, f64, f64) {
    let (a, l, z) = (p.alpha, p.span_length_km, p.zeta);
    let e1 = f64::exp(-a * z * l);
    let he = 1.0 + 2.0 * e1 * (ns - 1.0 + f64::exp(-a * z * l * ns) - ns * e1) / (ns * (e1 - 1.0) * (e1 - 1.0));
    let beta2 = p.beta2.abs() * 1e-24;
    let df = (p.slot_bandwidth_ghz + p.guard_band_ghz) * 1e9;
    let dg = p.guard_band_ghz * 1e9;
    let bw = p.channels as f64 * df;
    let fw = (a / beta2).sqrt() / (2.0 * PI);
    let b0 = 4.0 * fw * fw / bw;
    let mut bracket = (bw / b0).ln();
    if dg > 0.0 {
        bracket -= dg / df * (p.channels as f64 - 2.0).ln();
    }
    let i0 = (PI * a * beta2 / (p.gamma * p.gamma * ns * he)).sqrt() / (1.0 - dg / df).sqrt() / bracket.sqrt() * 1e9;
    let n0 = 0.5 * ns * f64::exp(a * l) * p.planck * p.frequency_hz * p.noise_figure * 1e9;
    let i = p.launch_density;
    let s = i * f64::exp(-(i / i0) * (i / i0));
    (he, i0, n0, s / (n0 + i - s))
}

fn params() -> impl Strategy<Value = FiberParams> {
    (
        0.5f64..2.0,
        0.03f64..0.07,
        -30.0f64..-5.0,
        40.0f64..120.0,
        0.05f64..=1.0,
        0.0f64..3.0,
        16usize..400,
        1e-7f64..1e-4,
        2.0f64..8.0,
    )
        .prop_map(
            |(gamma, alpha, beta2, span, zeta, guard, channels, launch, nf)| FiberParams {
                gamma,
                alpha,
                beta2,
                span_length_km: span,
                zeta,
                guard_band_ghz: guard,
                channels,
                launch_density: launch,
                noise_figure: nf,
                ..FiberParams::default()
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn link_terms_match_reference(p in params(), spans in 1u32..40) {
        let (he, i0, n0, osnr) = reference_osnr(&p, spans as f64);
        prop_assert!(rel(noise_enhancement(&p, spans).unwrap(), he) < 1e-12);
        prop_assert!(rel(nonlinear_threshold(&p, spans).unwrap(), i0) < 1e-12);
        prop_assert!(rel(ase_density(&p, spans).unwrap(), n0) < 1e-12);
        prop_assert!(rel(link_osnr(&p, spans).unwrap(), osnr) < 1e-12);
    }

    #[test]
    fn enhancement_at_least_one(p in params(), spans in 1u32..200) {
        prop_assert!(noise_enhancement(&p, spans).unwrap() >= 1.0 - 1e-15);
    }

    #[test]
    fn osnr_monotone(p in params(), len in 1.0f64..6000.0, extra in 1.0f64..2000.0, hops in 1usize..12) {
        let base = osnr_db_for(&p, len, hops).unwrap();
        prop_assert!(osnr_db_for(&p, len + extra, hops).unwrap() <= base + 1e-12);
        prop_assert!(osnr_db_for(&p, len, hops + 1).unwrap() < base);
        let noisier = FiberParams { noise_figure: p.noise_figure * 1.5, ..p.clone() };
        prop_assert!(osnr_db_for(&noisier, len, hops).unwrap() < base);
    }

    #[test]
    fn coding_gain_is_linear(p in params(), x in 0.0f64..1e4, y in 0.0f64..1e4, c in 0.0f64..10.0) {
        let p = FiberParams { d_free: 5.0, code_rate: 0.75, ..p };
        let lhs = apparent_osnr(x + c * y, &p);
        let rhs = apparent_osnr(x, &p) + c * apparent_osnr(y, &p);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        prop_assert!((apparent_osnr(x, &p) - 3.75 * x).abs() <= 1e-12 * x.max(1.0));
    }
}

/// Unimodality of the exact form and the location of the approximate peak.
#[test]
fn osnr_peak() {
    let p = FiberParams::default();
    for spans in [1, 5, 10, 25] {
        let opt = optimal_launch_density(&p, spans).unwrap();
        let grid: Vec<f64> = (0..2000)
            .map(|i| opt * 10f64.powf(-2.0 + 4.0 * i as f64 / 1999.0))
            .collect();
        let exact: Vec<f64> = grid
            .iter()
            .map(|&i| {
                link_osnr(
                    &FiberParams {
                        launch_density: i,
                        ..p.clone()
                    },
                    spans,
                )
                .unwrap()
            })
            .collect();
        let peak = exact.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(exact[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(exact[peak..].windows(2).all(|w| w[0] >= w[1]));

        let approx = |i: f64| link_osnr_approx(&p, spans, i).unwrap();
        // golden-section search on log density
        let (mut lo, mut hi) = ((opt / 100.0).ln(), (opt * 100.0).ln());
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if approx(a.exp()) < approx(b.exp()) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let found = ((lo + hi) / 2.0).exp();
        assert!(rel(found, opt) < 0.01, "spans {spans}: {found} vs {opt}");
    }
}
