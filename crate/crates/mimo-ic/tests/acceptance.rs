//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion
//! (bypassing the test harness capture) and fails if any gating criterion
//! fails.

use std::io::Write;
use std::time::{Duration, Instant};

use mimo_ic::alignment::{construct, construct_ratio_scheme, g_matrix_demo, BuildOptions, Mode};
use mimo_ic::certifier::{
    estimate_dof_slope, evaluate_cell, feasibility_grid_with, time_extension_survey, verify_solution, GridOptions,
};
use mimo_ic::channel::{ChannelSet, Flavor};
use mimo_ic::cob::{builtin_pattern, cob_recursive, identity_check_channel, verify_connectivity};
use mimo_ic::dof_core::{
    dof_star, is_linear_feasible, piecewise_dof, redundancy_class, AntennaConfig, Rational, Redundancy,
};
use mimo_ic::linalg::CMat;

struct Outcome {
    pass: bool,
    detail: String,
}

fn cfg(t: usize, r: usize) -> AntennaConfig {
    AntennaConfig::new(t, r).unwrap()
}

fn formula_equivalence() -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    for n in 2..=256 {
        for m in 1..n {
            count += 1;
            if dof_star(cfg(m, n)) != piecewise_dof(cfg(m, n)) {
                bad.push((m, n));
            }
        }
    }
    Outcome { pass: bad.is_empty(), detail: format!("{count} pairs, {} mismatches", bad.len()) }
}

fn quoted_values() -> Outcome {
    let cases = [
        ((2, 3), Rational::new(6, 5)),
        ((3, 4), Rational::new(12, 7)),
        ((4, 5), Rational::new(20, 9)),
        ((5, 6), Rational::new(30, 11)),
        ((4, 8), Rational::new(8, 3)),
        ((9, 10), Rational::new(90, 19)),
        ((7, 10), Rational::new(21, 5)),
        ((10, 15), Rational::from_integer(6)),
    ];
    let bad: Vec<_> = cases.iter().filter(|((t, r), v)| dof_star(cfg(*t, *r)) != *v).collect();
    Outcome { pass: bad.is_empty(), detail: format!("{} values, {} wrong", cases.len(), bad.len()) }
}

fn feasibility_grid() -> Outcome {
    let opts = GridOptions::default();
    let g = feasibility_grid_with(10, 10, &opts);
    let failing = g.cells.iter().filter(|c| !c.pass).count();
    let disagree = g.mismatches().len();
    // One above the floor must fail everywhere, matching the rule's other side.
    let over = GridOptions { seeds_per_cell: 1, ..opts };
    let over_disagree = g
        .cells
        .iter()
        .filter(|c| !evaluate_cell(cfg(c.m_t, c.m_r), c.d + 1, &over).agrees())
        .count();
    Outcome {
        pass: failing == 0 && disagree == 0 && over_disagree == 0,
        detail: format!(
            "{} cells, {failing} failing, {disagree} disagreeing, {over_disagree} disagreeing at floor+1",
            g.cells.len()
        ),
    }
}

fn proper_infeasible() -> Outcome {
    let cases = [
        ((4, 8), 3, true, Rational::new(8, 3)),
        ((8, 12), 5, true, Rational::new(24, 5)),
        ((148, 200), 86, false, Rational::new(600, 7)),
        ((244, 400), 161, true, Rational::from_integer(160)),
    ];
    let mut ok = 0;
    for ((t, r), d, strict, bound) in cases {
        let v = is_linear_feasible(cfg(t, r), d);
        if v.proper && !v.linear_feasible && v.info_bound == bound && (!strict || v.strictly_proper) {
            ok += 1;
        }
    }
    Outcome { pass: ok == cases.len(), detail: format!("{ok}/{} classified", cases.len()) }
}

fn ratio_constructions() -> Outcome {
    let cases = [(3, 5, 2, 1, 2), (5, 7, 3, 1, 3), (6, 10, 2, 2, 4), (7, 9, 4, 1, 4)];
    let mut failures = 0;
    for (t, r, p, q, per_user) in cases {
        for seed in 0..50 {
            let ch = ChannelSet::generate(t, r, Flavor::Constant, seed).unwrap();
            let c = construct_ratio_scheme(&ch, &BuildOptions::new(seed)).unwrap();
            let rep = verify_solution(&c.channel, &c.solution).unwrap();
            let shaped = c.solution.demand == [per_user; 3]
                && rep.per_rx.iter().all(|x| x.interference_dim == (p + 1) * q && x.joint_rank == r);
            if !(rep.pass && shaped) {
                failures += 1;
            }
        }
    }
    Outcome { pass: failures == 0, detail: format!("4 configs x 50 seeds, {failures} failures") }
}

fn g_matrix_dichotomy() -> Outcome {
    let constant = (0..100).filter(|&s| g_matrix_demo(s, Flavor::Constant, 1e-6).1 <= 14).count();
    let varying = (0..100).filter(|&s| g_matrix_demo(s, Flavor::TimeVarying, 1e-6).1 == 15).count();
    Outcome {
        pass: constant == 100 && varying >= 99,
        detail: format!("constant rank<=14 on {constant}/100, time-varying rank 15 on {varying}/100"),
    }
}

fn basis_patterns() -> Outcome {
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for p in 2..=6 {
        let mask = builtin_pattern(p).unwrap();
        for seed in 0..50 {
            let ch = ChannelSet::generate(p, p + 1, Flavor::Constant, seed).unwrap();
            let rep = verify_connectivity(&cob_recursive(&ch, p).unwrap(), &mask, 1e-9).unwrap();
            worst = worst.max(rep.max_residual);
            failures += usize::from(!rep.pass);
        }
    }
    let bc = cob_recursive(&identity_check_channel(1), 2).unwrap();
    let identity = bc.t_mats.iter().chain(&bc.r_mats).all(|m| *m == CMat::identity(m.nrows(), m.ncols()));
    Outcome {
        pass: failures == 0 && worst <= 1e-9 && identity,
        detail: format!("max residual {worst:.2e}, {failures} failures, identity case exact: {identity}"),
    }
}

fn redundancy_semantics() -> Outcome {
    let mut bad = 0;
    let mut count = 0;
    for n in 2..=64usize {
        for m in 1..n {
            count += 1;
            let s = 4 * n;
            let base = dof_star(cfg(s * m, s * n));
            let less_m = dof_star(cfg(s * m - 1, s * n));
            let less_n = dof_star(cfg(s * m, s * n - 1));
            let ok = match redundancy_class(cfg(m, n)) {
                Redundancy::SetA => less_m == base && less_n == base,
                Redundancy::SetB => less_m < base && less_n < base,
                Redundancy::MBottleneck => less_n == base && less_m < base,
                Redundancy::NBottleneck => less_m == base && less_n < base,
                Redundancy::Square => false,
            };
            bad += usize::from(!ok);
        }
    }
    Outcome { pass: bad == 0, detail: format!("{count} ratios, {bad} violations") }
}

fn slopes() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (t, r, target) in [(3, 5, 6.0), (1, 3, 3.0)] {
        let ch = ChannelSet::generate(t, r, Flavor::Constant, 1).unwrap();
        let c = construct(&ch, Mode::Auto, &BuildOptions::new(1)).unwrap();
        let s = estimate_dof_slope(&c.channel, &c.solution, &[40.0, 50.0, 60.0]).unwrap();
        pass &= (s.slope - target).abs() <= 0.1 * target;
        parts.push(format!("{t}x{r} slope {:.3} (target {target})", s.slope));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    writeln!(err, "{line}").unwrap();
}

#[test]
fn acceptance_criteria() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Option<Duration>, bool); 9] = [
        (1, "formula equivalence up to 256", formula_equivalence, Some(Duration::from_secs(1)), true),
        (2, "quoted DoF values", quoted_values, None, true),
        (3, "feasibility grid 10x10", feasibility_grid, Some(Duration::from_secs(60)), true),
        (4, "proper but infeasible catalogue", proper_infeasible, None, true),
        (5, "ratio constructions", ratio_constructions, Some(Duration::from_secs(10)), true),
        (6, "constant vs time-varying at 2x3", g_matrix_dichotomy, Some(Duration::from_secs(5)), true),
        (7, "change of basis zero patterns", basis_patterns, None, true),
        (8, "redundancy semantics", redundancy_semantics, None, true),
        (9, "high-SNR slope (reported only)", slopes, None, false),
    ];
    let mut gating_failures = Vec::new();
    report("");
    for (id, name, check, budget, gating) in criteria {
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let in_time = budget.is_none_or(|b| took <= b);
        let pass = out.pass && in_time;
        let budget_note = budget.map(|b| format!(" / budget {:.0?}", b)).unwrap_or_default();
        report(&format!(
            "criterion {id} {}: {name}: {} [{:.2?}{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took
        ));
        if gating && !pass {
            gating_failures.push(id);
        }
    }

    let survey = time_extension_survey(6, &GridOptions::default());
    let needs: Vec<String> = survey
        .iter()
        .filter(|c| c.needs_time_variation())
        .map(|c| format!("({},{})", c.m_t, c.m_r))
        .collect();
    report(&format!("info: symbol extension needs time variation at {}", needs.join(" ")));
    assert!(gating_failures.is_empty(), "failing criteria: {gating_failures:?}");
}
