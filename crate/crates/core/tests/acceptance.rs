//! Acceptance suite. Runs every headline check at its stated tolerance and
//! prints one PASS/FAIL line per check. Exits nonzero if any check fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use countcurate::compare::{dissimilarity_values, Norm};
use countcurate::detect::{
    detect_change_points, fit_change_point, AnomalyDetail, AnomalyKind, AnomalyRecord, AnomalyStatus,
    ChangePointConfig,
};
use countcurate::ingest::{
    canonical_bytes, fetch_source, normalize_geography, parse_canonical, parse_source, GeoRuleSet,
};
use countcurate::model::{to_increments, CumulativeSeries};
use countcurate::numerics::{chisq_cdf, irls_glm, Family, IrlsOptions, Matrix};
use countcurate::pipeline::{
    append_decision, repair_series, run_pipeline, CurationDecision, PipelineConfig, RepairSettings, Verdict,
};
use countcurate::repair::{redistribute_residual, repair_od_values};
use countcurate::seasonality::{friedman_test, kruskal_wallis_test, qs_test, welch_anova_test};
use countcurate::{IncrementSeries, Metric, Panel, SeriesKey, SourceId};
use rand::{rngs::StdRng, Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

type Check = Result<String, String>;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn load(source: SourceId, rel: &str, metric: Metric) -> Panel {
    let snap = fetch_source(source, fixture(rel).to_str().unwrap(), true).unwrap();
    parse_source(&snap, metric).unwrap().panel
}

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, m, d).unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(started: Instant, budget: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < budget, format!("took {took:.1?}, budget {budget:?}"))
}

// ---------------------------------------------------------------------------

fn dissimilarity() -> Check {
    let t0 = Instant::now();
    let a = [1.0, 2.0, 3.0];
    let b = [1.0, 2.0, 5.0];
    // hand value: sqrt(0 + 0 + 4) / 3 / ((3 + 5) / 2)
    let d = dissimilarity_values(&a, &b, 4.0, Norm::L2).map_err(|e| e.to_string())?;
    ensure((d - 1.0 / 6.0).abs() <= 1e-12, format!("fixture gives {d}"))?;

    let mut rng = StdRng::seed_from_u64(1);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let mut gen = || {
            let mut acc = 0.0;
            (0..n)
                .map(|_| {
                    acc += rng.random_range(0..50) as f64;
                    acc
                })
                .collect::<Vec<f64>>()
        };
        let (x, y) = (gen(), gen());
        let m = (x[n - 1] + y[n - 1]) / 2.0;
        let c = rng.random_range(0.01..1000.0);
        for norm in [Norm::L2, Norm::L1] {
            let dxy = dissimilarity_values(&x, &y, m, norm).unwrap();
            let dyx = dissimilarity_values(&y, &x, m, norm).unwrap();
            ensure(dxy == dyx, format!("case {case}: asymmetric {dxy} vs {dyx}"))?;
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let ds = dissimilarity_values(&xs, &ys, m * c, norm).unwrap();
            ensure(
                (ds - dxy).abs() <= 1e-12 * dxy.max(1.0),
                format!("case {case}: scale {c} moves {dxy} to {ds}"),
            )?;
        }
    }
    within_budget(t0, Duration::from_secs(1))?;
    Ok("1/6 exact; 1,000 symmetry and scale cases".into())
}

// ---------------------------------------------------------------------------

fn simulate(seed: u64, break_slope: f64) -> IncrementSeries {
    let mut rng = StdRng::seed_from_u64(seed);
    let v: Vec<f64> = (1..=120)
        .map(|t| {
            let t = t as f64;
            let mu = (50f64.ln() + 0.01 * t + break_slope * (t - 60.0).max(0.0)).exp();
            Poisson::new(mu).unwrap().sample(&mut rng)
        })
        .collect();
    IncrementSeries::from_values(day(3, 15), v)
}

fn planted_break_recovery() -> Result<(usize, usize), String> {
    let cfg = ChangePointConfig { alpha: 0.05, ..Default::default() };
    let hits = (0..200u64)
        .into_par_iter()
        .map(|seed| fit_change_point(&simulate(10_000 + seed, 0.03), &cfg).map(|f| (f.phi - 60.0).abs() <= 2.0))
        .collect::<Result<Vec<bool>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((hits.iter().filter(|h| **h).count(), hits.len()))
}

fn state_breaks() -> Check {
    let t0 = Instant::now();
    // The archived NYT state snapshot is not bundled, so the check runs on
    // a labelled synthetic surrogate with breaks planted at the same dates,
    // plus the planted-break simulation.
    let expected = [
        ("California", Metric::Infection, day(6, 10)),
        ("Florida", Metric::Infection, day(6, 7)),
        ("Missouri", Metric::Infection, day(6, 23)),
        ("Nevada", Metric::Infection, day(6, 9)),
        ("South Carolina", Metric::Death, day(7, 13)),
        ("Texas", Metric::Death, day(7, 1)),
    ];
    let mut found = Vec::new();
    for (state, metric, date) in expected {
        let panel = load(SourceId::NYT, "breaks/nyt_states_surrogate.csv", metric)
            .window(day(3, 15), day(7, 25))
            .map_err(|e| e.to_string())?;
        let y = panel.get_by_label(state).ok_or(format!("{state} missing"))?;
        let hit = detect_change_points(&to_increments(y), &ChangePointConfig::default())
            .map_err(|e| e.to_string())?
            .ok_or(format!("{state}: no significant change point"))?;
        let gap = (hit.1.date - date).num_days().abs();
        ensure(gap <= 3, format!("{state}: found {} expected {date}", hit.1.date))?;
        found.push(format!("{state} {}", hit.1.date.format("%m-%d")));
    }
    let (hits, n) = planted_break_recovery()?;
    ensure(hits * 10 >= n * 9, format!("planted breaks recovered {hits}/{n}"))?;
    within_budget(t0, Duration::from_secs(30))?;
    Ok(format!(
        "DOWNGRADED (no archived snapshot): surrogate {}; planted {hits}/{n}",
        found.join(", ")
    ))
}

fn change_point_calibration() -> Check {
    let t0 = Instant::now();
    let cfg = ChangePointConfig { alpha: 0.05, ..Default::default() };
    let rejections = (0..1000u64)
        .into_par_iter()
        .map(|seed| fit_change_point(&simulate(seed, 0.0), &cfg).map(|f| f.adjusted_p < cfg.alpha))
        .collect::<Result<Vec<bool>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|r| *r)
        .count();
    let rate = rejections as f64 / 1000.0;
    ensure((rate - 0.05).abs() <= 0.03, format!("null detection rate {rate}"))?;
    let (hits, n) = planted_break_recovery()?;
    ensure(hits * 10 >= n * 9, format!("planted breaks recovered {hits}/{n}"))?;
    within_budget(t0, Duration::from_secs(120))?;
    Ok(format!("null rate {rate:.3} over 1,000 seeds; phi within 2 days {hits}/{n}"))
}

// ---------------------------------------------------------------------------

fn seasonality() -> Check {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for metric in [Metric::Infection, Metric::Death] {
        let panel = load(SourceId::NYT, "national/nyt_us.csv", metric)
            .window(day(3, 15), day(7, 25))
            .map_err(|e| e.to_string())?;
        let z = to_increments(panel.get(&SeriesKey::national()).ok_or("no national series")?);
        let f = friedman_test(&z).map_err(|e| e.to_string())?.p_value;
        let k = kruskal_wallis_test(&z).map_err(|e| e.to_string())?.p_value;
        if !(f < 1e-7 && k < 1e-7) {
            failures.push(format!("{metric}: Friedman p {f:.1e}, KW p {k:.1e}"));
        }
        notes.push(format!("{metric} F={f:.1e} KW={k:.1e}"));
    }

    // 2,000 seeds so the check sees each test's real rate rather than one
    // noisy 500-seed draw.
    let seeds = 2000u64;
    let rejected: Vec<[bool; 4]> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = StdRng::seed_from_u64(20_000 + seed);
            let n = Normal::new(0.0, 1.0).unwrap();
            let z = IncrementSeries::from_values(day(3, 15), (0..133).map(|_| n.sample(&mut rng)).collect());
            [
                qs_test(&z).unwrap().p_value < 0.05,
                friedman_test(&z).unwrap().p_value < 0.05,
                kruskal_wallis_test(&z).unwrap().p_value < 0.05,
                welch_anova_test(&z).unwrap().p_value < 0.05,
            ]
        })
        .collect();
    let mut rates = Vec::new();
    for (i, name) in ["QS", "Friedman", "KW", "Welch"].iter().enumerate() {
        let rate = rejected.iter().filter(|r| r[i]).count() as f64 / seeds as f64;
        rates.push(format!("{name} {rate:.3}"));
        if (rate - 0.05).abs() > 0.02 {
            failures.push(format!("{name} null rate {rate}"));
        }
    }

    // rank tests only see ranks, so a strictly increasing map changes nothing
    let mut rng = StdRng::seed_from_u64(7);
    for case in 0..200 {
        let v: Vec<f64> = (0..70).map(|_| rng.random_range(0..40) as f64).collect();
        let z = IncrementSeries::from_values(day(3, 15), v.clone());
        let g = z.with_values(v.iter().map(|x| x * x * x + (x / 10.0).exp()).collect());
        for (a, b) in [
            (friedman_test(&z), friedman_test(&g)),
            (kruskal_wallis_test(&z), kruskal_wallis_test(&g)),
        ] {
            let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
            ensure(
                (a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.abs().max(1.0),
                format!("case {case}: rank statistic moved {} -> {}", a.statistic, b.statistic),
            )?;
        }
    }
    within_budget(t0, Duration::from_secs(120))?;
    let summary = format!("{}; null {}; rank invariance 200 cases", notes.join(", "), rates.join(", "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{} [{summary}]", failures.join("; ")))
    }
}

// ---------------------------------------------------------------------------

fn planted_spike_case(seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(30_000 + seed);
    let n = rng.random_range(40..120);
    let rate = rng.random_range(5.0..300.0);
    let slope = rng.random_range(0.0..3.0);
    let mut z: Vec<f64> = (0..n)
        .map(|t| Poisson::new(rate + slope * t as f64).unwrap().sample(&mut rng))
        .collect();
    let t_m = rng.random_range(15..n);
    z[t_m] += rng.random_range(20.0..50.0) * rate.sqrt() + 100.0;
    let y = CumulativeSeries::new(
        SeriesKey::state("Iowa"),
        Metric::Infection,
        SourceId::NYT,
        day(3, 1),
        countcurate::model::running_sum(&z),
    )
    .unwrap();
    let mut rec = AnomalyRecord::new(
        &y.key,
        y.metric,
        y.source,
        AnomalyKind::PointAnomaly,
        y.start_date,
        t_m,
        z[t_m],
        AnomalyDetail::Od { previous: 0.0, current: 0.0 },
    );
    rec.status = AnomalyStatus::Confirmed;
    let out = repair_series(&y, &[&rec], &RepairSettings::default(), &BTreeMap::new());
    let last = *out.values.last().unwrap();
    ensure(
        (last - y.last()).abs() <= 1e-9 * y.last().abs().max(1.0),
        format!("seed {seed}: final {} -> {last}", y.last()),
    )?;
    ensure(
        out.values.windows(2).all(|w| w[1] >= w[0]) && out.values[0] >= 0.0,
        format!("seed {seed}: negative increment after repair"),
    )?;
    ensure(!out.results.is_empty(), format!("seed {seed}: nothing attempted"))
}

fn repair_conservation() -> Check {
    let t0 = Instant::now();
    let mut z = [10.0, 10.0, 10.0, 40.0];
    redistribute_residual(&mut z, 3, 10.0, &[0, 1, 2]).map_err(|e| e.to_string())?;
    ensure(z == [20.0, 20.0, 20.0, 10.0], format!("hand example gives {z:?}"))?;

    (0..1000u64).into_par_iter().try_for_each(planted_spike_case)?;

    // every repaired fixture: the NJ run with all point anomalies confirmed
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = nj_config(tmp.path());
    run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let records = read_records(&cfg.output_dir);
    let mut confirmed = 0;
    for r in records.iter().filter(|r| r.kind == AnomalyKind::PointAnomaly) {
        append_decision(&cfg.decision_log, &CurationDecision::new(r.id.clone(), Verdict::Confirm))
            .map_err(|e| e.to_string())?;
        confirmed += 1;
    }
    let report = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let mut series = 0;
    for e in &report.panels {
        let raw = countcurate::ingest::read_canonical(&cfg.output_dir.join(&e.canonical), e.source, e.metric)
            .map_err(|e| e.to_string())?;
        let rep = countcurate::ingest::read_canonical(
            &cfg.output_dir.join(e.repaired.as_ref().ok_or("no repaired panel")?),
            e.source,
            e.metric,
        )
        .map_err(|e| e.to_string())?;
        for s in raw.series() {
            let r = rep.get(&s.key).ok_or("series lost in repair")?;
            ensure(
                (r.last() - s.last()).abs() <= 1e-9 * s.last().max(1.0),
                format!("{} {}: final {} -> {}", e.source, s.key, s.last(), r.last()),
            )?;
            ensure(r.is_nondecreasing(), format!("{} {}: negative increment", e.source, s.key))?;
            series += 1;
        }
    }
    within_budget(t0, Duration::from_secs(30))?;
    Ok(format!(
        "hand example exact; 1,000 planted spikes; NJ fixture {series} series with {confirmed} confirmed"
    ))
}

// ---------------------------------------------------------------------------

/// Largest nondecreasing sequence over `{0..=4}` lying under `y` with the
/// same final value, found by enumerating every candidate.
fn brute_force_minorant(y: &[f64]) -> Option<Vec<f64>> {
    fn walk(y: &[f64], cur: &mut Vec<f64>, best: &mut Option<Vec<f64>>) {
        if cur.len() == y.len() {
            if cur.last() != y.last() {
                return;
            }
            match best {
                None => *best = Some(cur.clone()),
                Some(b) => b.iter_mut().zip(cur.iter()).for_each(|(b, c)| *b = b.max(*c)),
            }
            return;
        }
        let lo = cur.last().copied().unwrap_or(0.0) as u32;
        for v in lo..=4 {
            let v = v as f64;
            if v > y[cur.len()] {
                break;
            }
            cur.push(v);
            walk(y, cur, best);
            cur.pop();
        }
    }
    let mut best = None;
    walk(y, &mut Vec::new(), &mut best);
    best
}

fn od_optimality() -> Check {
    let t0 = Instant::now();
    let mut checked = 0;
    for len in 1..=6u32 {
        for code in 0..5u32.pow(len) {
            let y: Vec<f64> = (0..len).map(|i| ((code / 5u32.pow(i)) % 5) as f64).collect();
            let oracle = brute_force_minorant(&y).ok_or(format!("{y:?}: no minorant"))?;
            let got = repair_od_values(&y);
            ensure(got == oracle, format!("{y:?}: clamp {got:?}, brute force {oracle:?}"))?;
            checked += 1;
        }
    }
    let mut rng = StdRng::seed_from_u64(99);
    for case in 0..10_000 {
        let n = rng.random_range(1..80);
        let y: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { rng.random_range(0..1000) as f64 } else { rng.random_range(0.0..1e6) })
            .collect();
        let once = repair_od_values(&y);
        ensure(repair_od_values(&once) == once, format!("case {case}: not idempotent"))?;
    }
    within_budget(t0, Duration::from_secs(60))?;
    Ok(format!("{checked} exhaustive vectors; 10,000 idempotence cases"))
}

// ---------------------------------------------------------------------------

fn numerics() -> Check {
    let t0 = Instant::now();
    // even degrees of freedom have a closed form through the Poisson sum
    let x: f64 = 12.592;
    let h = x / 2.0;
    let oracle = 1.0 - (-h).exp() * (1.0 + h + h * h / 2.0);
    let got = chisq_cdf(x, 6.0).map_err(|e| e.to_string())?;
    ensure((got - 0.95).abs() <= 1e-4, format!("chisq_cdf(12.592, 6) = {got}"))?;
    ensure((got - oracle).abs() <= 1e-12, format!("closed form {oracle}, got {got}"))?;

    let y = [3.0, 0.0, 7.0, 2.0, 5.0, 1.0, 4.0, 4.0, 9.0, 0.0];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let x1 = Matrix::from_fn(y.len(), 1, |_, _| 1.0);
    let fit = irls_glm(&x1, &y, Family::PoissonLog, IrlsOptions::default(), None).map_err(|e| e.to_string())?;
    let mu = fit.coefficients[0].exp();
    ensure((mu - mean).abs() <= 1e-10, format!("intercept-only mean {mu} vs {mean}"))?;

    let covered = (0..500u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = StdRng::seed_from_u64(40_000 + seed);
            let xs: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| Poisson::new((0.5f64 + 0.8 * x).exp()).unwrap().sample(&mut rng))
                .collect();
            let design = Matrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
            let fit = irls_glm(&design, &ys, Family::PoissonLog, IrlsOptions::default(), None).unwrap();
            let se = fit.std_errors();
            (fit.coefficients[0] - 0.5).abs() <= 3.0 * se[0] && (fit.coefficients[1] - 0.8).abs() <= 3.0 * se[1]
        })
        .filter(|c| *c)
        .count();
    ensure(covered * 100 >= 500 * 95, format!("3-SE coverage {covered}/500"))?;
    within_budget(t0, Duration::from_secs(60))?;
    Ok(format!("chisq_cdf = {got:.6}; intercept-only exact; coverage {covered}/500"))
}

// ---------------------------------------------------------------------------

const SOURCE_FIXTURES: &[(SourceId, &str, Metric)] = &[
    (SourceId::NYT, "sources/nyt_counties.csv", Metric::Infection),
    (SourceId::NYT, "sources/nyt_counties.csv", Metric::Death),
    (SourceId::JHU, "sources/jhu_confirmed.csv", Metric::Infection),
    (SourceId::JHU, "sources/jhu_deaths.csv", Metric::Death),
    (SourceId::USAFacts, "sources/usafacts_confirmed.csv", Metric::Infection),
    (SourceId::USAFacts, "sources/usafacts_deaths.csv", Metric::Death),
    (SourceId::Atlantic, "sources/atlantic_daily.csv", Metric::Infection),
    (SourceId::Atlantic, "sources/atlantic_daily.csv", Metric::Death),
    (SourceId::Atlantic, "sources/atlantic_daily.csv", Metric::Recovered),
    (SourceId::NYT, "utah/nyt_utah.csv", Metric::Infection),
    (SourceId::JHU, "utah/jhu_utah.csv", Metric::Infection),
    (SourceId::NYT, "nj/nyt_states.csv", Metric::Death),
    (SourceId::Atlantic, "nj/atlantic_states.csv", Metric::Death),
    (SourceId::NYT, "national/nyt_us.csv", Metric::Infection),
    (SourceId::NYT, "national/nyt_us.csv", Metric::Death),
    (SourceId::NYT, "breaks/nyt_states_surrogate.csv", Metric::Infection),
    (SourceId::NYT, "breaks/nyt_states_surrogate.csv", Metric::Death),
];

fn ingest_round_trip() -> Check {
    let mut panels = 0;
    for &(source, rel, metric) in SOURCE_FIXTURES {
        let raw = load(source, rel, metric);
        let (norm, report) = normalize_geography(&raw, &GeoRuleSet::default()).map_err(|e| e.to_string())?;
        for p in [&raw, &norm] {
            let bytes = canonical_bytes(p).map_err(|e| e.to_string())?;
            let back = parse_canonical(&bytes, source, metric).map_err(|e| e.to_string())?;
            ensure(&back == p, format!("{rel} {metric}: panel changed on read-back"))?;
            ensure(
                canonical_bytes(&back).map_err(|e| e.to_string())? == bytes,
                format!("{rel} {metric}: bytes changed on rewrite"),
            )?;
            panels += 1;
        }
        ensure(
            report.total_before == report.total_after + report.excluded_total,
            format!("{rel} {metric}: normalization lost counts"),
        )?;
    }

    // NYC boroughs fold into one series with identical daily totals
    let jhu = load(SourceId::JHU, "sources/jhu_confirmed.csv", Metric::Infection);
    let mut nyc_only = GeoRuleSet::default();
    nyc_only.exclusions.clear();
    nyc_only.merges.retain(|m| m.target_fips == "36061");
    let (merged, _) = normalize_geography(&jhu, &nyc_only).map_err(|e| e.to_string())?;
    let boroughs = ["36047", "36081", "36005", "36085", "36061"];
    let by_hand: Vec<f64> = (0..jhu.num_days())
        .map(|t| {
            jhu.series()
                .filter(|s| boroughs.contains(&s.key.label().as_str()))
                .map(|s| s.values()[t])
                .sum()
        })
        .collect();
    let nyc = merged.get_by_label("36061").ok_or("no merged NYC series")?;
    ensure(nyc.values() == by_hand.as_slice(), "NYC merge does not match borough sums")?;
    ensure(
        !merged.keys().any(|k| boroughs[..4].contains(&k.label().as_str())),
        "borough series survived the merge",
    )?;
    ensure(merged.column_sums() == jhu.column_sums(), "NYC merge changed panel totals")?;
    Ok(format!("{panels} panels lossless; NYC merge exact"))
}

// ---------------------------------------------------------------------------

fn nj_config(dir: &Path) -> PipelineConfig {
    let base = fixture("nj");
    let text = std::fs::read_to_string(base.join("pipeline.toml")).unwrap();
    let mut cfg = PipelineConfig::from_toml(&text, &base).unwrap();
    cfg.output_dir = dir.join("out");
    cfg.decision_log = dir.join("decisions.jsonl");
    cfg.cache_dir = dir.join("cache");
    cfg
}

fn county_config(dir: &Path) -> PipelineConfig {
    let text = r#"
        level = "county"
        offline = true
        output_dir = "out"
        decision_log = "out/decisions.jsonl"
        [[sources]]
        id = "NYT"
        endpoint = "nyt_counties.csv"
        [[sources]]
        id = "JHU"
        [sources.endpoints]
        infection = "jhu_confirmed.csv"
        death = "jhu_deaths.csv"
        [[sources]]
        id = "USAFacts"
        [sources.endpoints]
        infection = "usafacts_confirmed.csv"
        death = "usafacts_deaths.csv"
    "#;
    let mut cfg = PipelineConfig::from_toml(text, &fixture("sources")).unwrap();
    cfg.output_dir = dir.join("out");
    cfg.decision_log = dir.join("decisions.jsonl");
    cfg.cache_dir = dir.join("cache");
    cfg
}

fn read_records(dir: &Path) -> Vec<AnomalyRecord> {
    std::fs::read_to_string(dir.join("anomalies.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let mut files = 0;
    for make in [nj_config as fn(&Path) -> PipelineConfig, county_config] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (ca, cb) = (make(a.path()), make(b.path()));
        run_pipeline(&ca).map_err(|e| e.to_string())?;
        // the same decisions go into both logs
        let mut decisions = Vec::new();
        for (i, r) in read_records(&ca.output_dir)
            .iter()
            .filter(|r| r.kind != AnomalyKind::OdViolation)
            .enumerate()
        {
            let mut d = CurationDecision::new(r.id.clone(), if i % 2 == 0 { Verdict::Confirm } else { Verdict::Dismiss });
            d.decided_at = "2020-08-01T00:00:00Z".parse().unwrap();
            decisions.push(d);
        }
        for cfg in [&ca, &cb] {
            for d in &decisions {
                append_decision(&cfg.decision_log, d).map_err(|e| e.to_string())?;
            }
        }
        let ra = run_pipeline(&ca).map_err(|e| e.to_string())?;
        let rb = run_pipeline(&cb).map_err(|e| e.to_string())?;
        ensure(!ra.failed() && !rb.failed(), "a stage failed")?;
        ensure(ra.run_id == rb.run_id, "run ids differ")?;
        let (ta, tb) = (tree(&ca.output_dir), tree(&cb.output_dir));
        ensure(ta.keys().eq(tb.keys()), "output file sets differ")?;
        for (k, v) in &ta {
            ensure(v == &tb[k], format!("{k} differs"))?;
        }
        files += ta.len();
    }
    Ok(format!("{files} output files byte-identical across runs"))
}

fn main() {
    let checks: &[(&str, fn() -> Check)] = &[
        ("dissimilarity oracle", dissimilarity),
        ("change points at surrogate dates", state_breaks),
        ("change-point calibration", change_point_calibration),
        ("seasonality", seasonality),
        ("repair conservation", repair_conservation),
        ("order-violation repair optimality", od_optimality),
        ("numerics", numerics),
        ("ingest round trip", ingest_round_trip),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = t0.elapsed();
        match outcome {
            Ok(msg) => println!("PASS  {name} ({took:.1?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name} ({took:.1?}): {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
