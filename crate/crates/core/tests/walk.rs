use dpkpz::walk::{
    collect_intersections, count_pmf, geometric_tv, kappa_hat, local_clt_check, rho_d, sample_intersections,
    WalkConfig,
};
use dpkpz::stats::Welford;

/// Exact `P(S_n = 0)` for the simple walk in `d` dimensions, `n = 0..=max`.
fn return_probabilities(d: usize, max: usize) -> Vec<f64> {
    use std::collections::HashMap;
    let mut dist: HashMap<Vec<i64>, f64> = HashMap::from([(vec![0; d], 1.0)]);
    let mut out = vec![1.0];
    for _ in 0..max {
        let mut next = HashMap::new();
        for (x, p) in &dist {
            for axis in 0..d {
                for s in [-1, 1] {
                    let mut y = x.clone();
                    y[axis] += s;
                    *next.entry(y).or_insert(0.0) += p / (2 * d) as f64;
                }
            }
        }
        dist = next;
        out.push(dist.get(&vec![0; d]).copied().unwrap_or(0.0));
    }
    out
}

#[test]
fn coincident_start_counts_time_zero() {
    let cfg = WalkConfig::new(3, 50, 200, 1).unwrap();
    for s in sample_intersections(&cfg, &[0, 0, 0], &[0, 10, 50]).unwrap() {
        assert_eq!(s.counts[0], 1);
        assert!(s.counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(s.first_meeting, Some(0));
    }
}

#[test]
fn odd_offsets_never_meet() {
    let cfg = WalkConfig::new(3, 10_000, 500, 2).unwrap();
    for s in sample_intersections(&cfg, &[1, 0, 0], &[]).unwrap() {
        assert_eq!(s.counts, vec![0]);
        assert!(!s.hit);
    }
    // Exhaustively: after n steps each, the two positions have opposite parity.
    let paths = |n: u32| -> Vec<[i64; 3]> {
        let mut v = vec![[0i64; 3]];
        for _ in 0..n {
            v = v
                .iter()
                .flat_map(|p| (0..6).map(move |k| {
                    let mut q = *p;
                    q[k / 2] += if k % 2 == 0 { 1 } else { -1 };
                    q
                }))
                .collect();
        }
        v
    };
    for n in 0..=3 {
        let ps = paths(n);
        for a in &ps {
            for b in &ps {
                assert_ne!([a[0], a[1], a[2]], [b[0] + 1, b[1], b[2]]);
            }
        }
    }
}

#[test]
fn parallel_and_sequential_streams_agree() {
    let cfg = WalkConfig::new(4, 2000, 300, 9).unwrap();
    let seq: Vec<_> = sample_intersections(&cfg, &[2, 0, 0, 0], &[100, 2000]).unwrap().collect();
    let par = collect_intersections(&cfg, &[2, 0, 0, 0], &[100, 2000]).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn mean_coincidences_match_difference_walk() {
    // S - S' is a walk sampled at even times, so E N_T = sum_{n <= T} P(S_{2n} = 0).
    let t = 12usize;
    let p = return_probabilities(3, 2 * t);
    let exact: f64 = (0..=t).map(|n| p[2 * n]).sum();
    let cfg = WalkConfig::new(3, t as u64, 100_000, 3).unwrap();
    let w: Welford = collect_intersections(&cfg, &[0, 0, 0], &[]).unwrap().iter().map(|s| s.counts[0] as f64).collect();
    let s = w.stats().unwrap();
    assert!((s.mean - exact).abs() <= 3.0 * s.se, "{s:?} vs {exact}");
}

#[test]
fn return_probability_decreases_with_dimension() {
    let r3 = rho_d(&WalkConfig::new(3, 10_000, 10_000, 4).unwrap()).unwrap();
    let r5 = rho_d(&WalkConfig::new(5, 10_000, 10_000, 4).unwrap()).unwrap();
    for r in [&r3, &r5] {
        assert!(r.stats.mean > 0.0 && r.stats.mean < 1.0);
        assert!(r.bracket >= 0.0);
    }
    assert!(r5.stats.mean < r3.stats.mean);
}

#[test]
fn coincidence_law_is_geometric() {
    let t = 100_000;
    let rho = rho_d(&WalkConfig::new(3, t, 20_000, 5).unwrap()).unwrap();
    let samples = collect_intersections(&WalkConfig::new(3, t, 20_000, 6).unwrap(), &[0, 0, 0], &[]).unwrap();
    let r = rho.stats.mean;
    let tv = geometric_tv(&count_pmf(&samples, 0, 20), r, 20);
    assert!(tv < 0.03, "tv = {tv}");
    // E N = 1 / (1 - rho), with the truncation bracket carried through.
    let n: Welford = samples.iter().map(|s| s.counts[0] as f64).collect();
    let n = n.stats().unwrap();
    let predicted = 1.0 / (1.0 - r);
    let se = (n.se.powi(2) + (rho.stats.se * predicted * predicted).powi(2)).sqrt();
    let slack = rho.bracket * predicted * predicted;
    assert!((n.mean - predicted).abs() <= 3.0 * se + slack, "{n:?} vs {predicted}");
}

#[test]
fn kappa_is_symmetric_translation_invariant_and_decays() {
    let cfg = WalkConfig::new(3, 20_000, 20_000, 7).unwrap();
    assert_eq!(kappa_hat(&cfg, &[1, 2, 3], &[1, 2, 3]).unwrap().mean, 1.0);
    let a = kappa_hat(&cfg, &[0, 0, 0], &[2, 2, 0]).unwrap();
    let b = kappa_hat(&cfg, &[2, 2, 0], &[0, 0, 0]).unwrap();
    assert_eq!(a, b);
    let c = kappa_hat(&WalkConfig { seed: 8, ..cfg }, &[5, -1, 3], &[7, 1, 3]).unwrap();
    assert!((a.mean - c.mean).abs() <= 3.0 * (a.se.powi(2) + c.se.powi(2)).sqrt());

    let ls = [2i64, 4, 8, 16];
    let k: Vec<f64> = ls.iter().map(|&l| kappa_hat(&cfg, &[0, 0, 0], &[l, 0, 0]).unwrap().mean).collect();
    assert!(k.windows(2).all(|w| w[1] < w[0]), "{k:?}");
    let xs: Vec<f64> = ls.iter().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = k.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((-1.6..=-0.6).contains(&slope), "slope {slope}");
}

#[test]
fn local_clt_rate() {
    let cfg = WalkConfig::new(3, 1, 200_000, 10).unwrap();
    let rows = local_clt_check(&cfg, &[2, 16, 64]).unwrap();
    assert!((rows[0].sup_mass - 1.0 / 6.0).abs() <= 3.0 * rows[0].se, "{:?}", rows[0]);
    assert!(rows[2].scaled <= 2.0 * rows[1].scaled, "{rows:?}");
    assert!(local_clt_check(&cfg, &[3]).is_err());
}

#[test]
fn low_dimensions_are_rejected() {
    assert!(WalkConfig::new(2, 10, 10, 0).is_err());
    assert!(WalkConfig::new(3, 0, 10, 0).is_err());
}
