use mimo_ic::dof_core::{
    self, characterize, dof_floor, dof_star, is_linear_feasible, is_proper, kappa, piecewise_dof, redundancy_class,
    segment, spatial_scale_factor, AntennaConfig, Branch, ChainLength, Rational, Redundancy,
};
use proptest::prelude::*;

fn cfg(t: usize, r: usize) -> AntennaConfig {
    AntennaConfig::new(t, r).unwrap()
}

/// Reference value built by searching for the chain length and comparing
/// the two bounds as cross-multiplied integers.
fn oracle(t: u64, r: u64) -> (u64, u64) {
    let (m, n) = (t.min(r), t.max(r));
    if m == n {
        return reduce(m, 2);
    }
    let mut k = 1;
    while k * (n - m) < m {
        k += 1;
    }
    let (a_num, a_den) = (k * m, 2 * k - 1);
    let (b_num, b_den) = (k * n, 2 * k + 1);
    if a_num * b_den <= b_num * a_den {
        reduce(a_num, a_den)
    } else {
        reduce(b_num, b_den)
    }
}

fn reduce(a: u64, b: u64) -> (u64, u64) {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    (a / x, b / x)
}

fn parts(r: Rational) -> (u64, u64) {
    (*r.numer() as u64, *r.denom() as u64)
}

#[test]
fn matches_oracle_on_all_small_pairs() {
    for t in 1..=64u64 {
        for r in 1..=64u64 {
            assert_eq!(parts(dof_star(cfg(t as usize, r as usize))), oracle(t, r), "{t}x{r}");
        }
    }
}

#[test]
fn quoted_values() {
    let cases = [
        ((2, 3), (6, 5)),
        ((3, 4), (12, 7)),
        ((4, 5), (20, 9)),
        ((5, 6), (30, 11)),
        ((4, 8), (8, 3)),
        ((9, 10), (90, 19)),
        ((7, 10), (21, 5)),
        ((10, 15), (6, 1)),
    ];
    for ((t, r), (a, b)) in cases {
        assert_eq!(dof_star(cfg(t, r)), Rational::new(a, b), "{t}x{r}");
    }
    assert_eq!(spatial_scale_factor(cfg(7, 10)), 5);
    assert_eq!(dof_star(cfg(35, 50)), Rational::from_integer(21));
    assert_eq!(dof_star(cfg(35, 49)), Rational::from_integer(21));
    assert_eq!(dof_star(cfg(10, 15)), Rational::from_integer(6));
    assert_eq!(dof_star(cfg(9, 15)), Rational::from_integer(6));
    assert_eq!(redundancy_class(cfg(2, 3)), Redundancy::SetA);
    assert_eq!(redundancy_class(cfg(1, 2)), Redundancy::SetA);
    assert_eq!(redundancy_class(cfg(3, 5)), Redundancy::SetB);
    assert_eq!(redundancy_class(cfg(7, 10)), Redundancy::MBottleneck);
    assert_eq!(segment(cfg(7, 10)).unwrap().branch, Branch::M);
    assert_eq!(segment(cfg(7, 10)).unwrap().p, 3);
}

#[test]
fn proper_but_infeasible_catalogue() {
    let cases = [((4, 8), 3, Rational::new(8, 3), true), ((8, 12), 5, Rational::new(24, 5), true)];
    for ((t, r), d, bound, strict) in cases {
        let v = is_linear_feasible(cfg(t, r), d);
        assert!(v.proper && !v.linear_feasible);
        assert_eq!(v.strictly_proper, strict);
        assert_eq!(v.info_bound, bound);
    }
    for ((t, r), d, bound) in [((148, 200), 86, Rational::new(600, 7)), ((244, 400), 161, Rational::from_integer(160))] {
        let v = is_linear_feasible(cfg(t, r), d);
        assert!(v.proper && !v.linear_feasible, "{t}x{r}");
        assert_eq!(v.info_bound, bound);
    }
}

/// Every piecewise segment holding a ratio `m/n` outside the zero-redundancy
/// set with `n <= 100` also holds a proper system that no scheme can serve:
/// scale the ratio until `floor((m + n) / 4)` exceeds the DoF value.
#[test]
fn every_segment_has_a_proper_infeasible_system() {
    let mut segments = std::collections::BTreeMap::<(u64, bool), bool>::new();
    for n in 2..=100usize {
        for m in 1..n {
            let c = cfg(m, n);
            if redundancy_class(c) == Redundancy::SetB || dof_core::reduced_ratio(c) != (m, n) {
                continue;
            }
            let s = segment(c).unwrap();
            let found = segments.entry((s.p, s.branch == Branch::M)).or_insert(false);
            if *found {
                continue;
            }
            *found = (1..=400).any(|k| {
                let big = cfg(k * m, k * n);
                let d = ((k * (m + n)) / 4) as u64;
                is_proper(big, d).0 && !is_linear_feasible(big, d).linear_feasible
            });
        }
    }
    let missing: Vec<_> = segments.iter().filter(|(_, &f)| !f).map(|(k, _)| *k).collect();
    assert!(missing.is_empty(), "segments without an example: {missing:?}");
}

#[test]
fn zero_forcing_regime() {
    for n in 2..=40usize {
        for m in 1..=n / 2 {
            let expected = if 3 * m <= n { Rational::from_integer(m as i64) } else { Rational::new(n as i64, 3) };
            assert_eq!(dof_star(cfg(m, n)), expected, "{m}x{n}");
        }
    }
}

/// Removing one antenna from a spatially scaled copy. At scale `4n` the
/// ratio moves by less than the distance to the next breakpoint.
fn drop_one(m: usize, n: usize) -> (Rational, Rational, Rational) {
    let s = 4 * n;
    let (sm, sn) = (s * m, s * n);
    (dof_star(cfg(sm, sn)), dof_star(cfg(sm - 1, sn)), dof_star(cfg(sm, sn - 1)))
}

#[test]
fn redundancy_semantics_hold_for_all_ratios() {
    for n in 2..=64usize {
        for m in 1..n {
            let (base, less_m, less_n) = drop_one(m, n);
            match redundancy_class(cfg(m, n)) {
                Redundancy::SetA => assert!(less_m == base && less_n == base, "{m}/{n}"),
                Redundancy::SetB => assert!(less_m < base && less_n < base, "{m}/{n}"),
                Redundancy::MBottleneck => assert!(less_n == base && less_m < base, "{m}/{n}"),
                Redundancy::NBottleneck => assert!(less_m == base && less_n < base, "{m}/{n}"),
                Redundancy::Square => unreachable!(),
            }
        }
    }
}

#[test]
fn mimo_gain_is_nonnegative_and_vanishes_only_at_corner_ratios() {
    for n in 2..=40usize {
        for m in 1..n {
            let g = dof_core::mimo_gain(cfg(m, n));
            assert!(g >= Rational::from_integer(0));
        }
    }
    assert_eq!(dof_core::mimo_gain(cfg(1, 2)), Rational::from_integer(0));
    assert_eq!(dof_core::mimo_gain(cfg(2, 3)), Rational::from_integer(0));
}

proptest! {
    #[test]
    fn formula_equals_piecewise(m in 1usize..=256, n in 1usize..=256) {
        prop_assert_eq!(dof_star(cfg(m, n)), piecewise_dof(cfg(m, n)));
    }

    #[test]
    fn symmetric(t in 1usize..=300, r in 1usize..=300) {
        prop_assert_eq!(dof_star(cfg(t, r)), dof_star(cfg(r, t)));
        prop_assert_eq!(characterize(cfg(t, r)).redundancy, characterize(cfg(r, t)).redundancy);
    }

    #[test]
    fn scale_covariant(t in 1usize..=120, r in 1usize..=120, q in 1usize..=8) {
        prop_assert_eq!(dof_star(cfg(q * t, q * r)), dof_star(cfg(t, r)) * Rational::from_integer(q as i64));
    }

    #[test]
    fn nondecreasing_in_each_count(t in 1usize..=200, r in 1usize..=200) {
        let base = dof_star(cfg(t, r));
        prop_assert!(dof_star(cfg(t + 1, r)) >= base);
        prop_assert!(dof_star(cfg(t, r + 1)) >= base);
    }

    #[test]
    fn between_half_and_all_of_the_smaller_side(t in 1usize..=200, r in 1usize..=200) {
        let d = dof_star(cfg(t, r));
        let m = t.min(r) as i64;
        prop_assert!(d <= Rational::from_integer(m));
        prop_assert!(d >= Rational::new(m, 2));
    }

    #[test]
    fn scale_factor_clears_denominator(t in 1usize..=200, r in 1usize..=200) {
        let c = cfg(t, r);
        let q = spatial_scale_factor(c) as i64;
        prop_assert!((dof_star(c) * Rational::from_integer(q)).is_integer());
        for smaller in 1..q {
            prop_assert!(!(dof_star(c) * Rational::from_integer(smaller)).is_integer());
        }
    }

    #[test]
    fn segment_index_is_chain_length(m in 1usize..=200, extra in 1usize..=200) {
        let c = cfg(m, m + extra);
        prop_assert_eq!(kappa(c), ChainLength::Finite(segment(c).unwrap().p));
    }

    #[test]
    fn feasibility_is_monotone_in_demand(t in 1usize..=60, r in 1usize..=60, d in 0u64..40) {
        let c = cfg(t, r);
        if is_linear_feasible(c, d + 1).linear_feasible {
            prop_assert!(is_linear_feasible(c, d).linear_feasible);
        }
        prop_assert_eq!(is_linear_feasible(c, d).linear_feasible, d <= dof_floor(c));
    }
}
