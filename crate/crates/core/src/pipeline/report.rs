//! Plot-ready report files built from the trend and underreporting
//! artifacts.

use super::artifacts::{read_ratios, read_rows, SeriesRow, TrendRow};
use super::stages::{load_correction, stage_quantities, CATALOG_SUMMARY, RATIOS, SERIES, TRENDS};
use super::{Ctx, StageResult, MIN_REPLICATES_FOR_CLAIMS};
use crate::trend::{AnnualSeries, Quantity, Stage};
use crate::underreport::{apply_correction, QuintileSeries, SeriesKind};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

/// Width of the blocks in `period_sums.csv`.
const PERIOD_YEARS: i32 = 30;

fn table_cell(row: Option<&TrendRow>) -> String {
    match row.and_then(|r| r.rate_percent.map(|v| (v, r.significant == Some(true)))) {
        Some((v, true)) => format!("*{v:.1}"),
        Some((v, false)) => format!("{v:.1}"),
        None => "NA".to_string(),
    }
}

pub fn report(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let cfg = ctx.cfg;
    let trends: Vec<TrendRow> = read_rows(&ctx.out(TRENDS))?;
    let series_rows: Vec<SeriesRow> = read_rows(&ctx.out(SERIES))?;
    let mut written = Vec::new();

    // trend table: one row per start year, one column per stage and quantity
    let columns: Vec<(Stage, Quantity)> = Stage::ALL
        .into_iter()
        .flat_map(|s| stage_quantities(s).iter().map(move |&q| (s, q)))
        .collect();
    let index: BTreeMap<(String, String, i32), &TrendRow> = trends
        .iter()
        .map(|r| ((r.stage.clone(), r.quantity.clone(), r.start_year), r))
        .collect();
    let mut start_years = cfg.start_years.clone();
    start_years.sort_unstable();
    start_years.dedup();
    let table = ctx.out("table1.csv");
    {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&table)?));
        let mut header = vec!["start_year".to_string()];
        header.extend(columns.iter().map(|(s, q)| format!("{s}:{q}")));
        w.write_record(&header)?;
        for &y in &start_years {
            let mut rec = vec![y.to_string()];
            for (s, q) in &columns {
                rec.push(table_cell(index.get(&(s.to_string(), q.to_string(), y)).copied()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    written.push(table);

    // annual series and 30-year sums
    let mut grouped: BTreeMap<(String, String), Vec<(i32, f64)>> = BTreeMap::new();
    for r in &series_rows {
        grouped
            .entry((r.stage.clone(), r.quantity.clone()))
            .or_default()
            .push((r.year, r.value));
    }
    let series_dir = ctx.out("series");
    std::fs::create_dir_all(&series_dir)?;
    let sums = ctx.out("period_sums.csv");
    let mut sums_w = csv::Writer::from_writer(BufWriter::new(File::create(&sums)?));
    sums_w.write_record(["stage", "quantity", "period_start", "period_end", "sum"])?;
    for (s, q) in &columns {
        let Some(points) = grouped.get(&(s.to_string(), q.to_string())) else {
            continue;
        };
        let (Some(&(y0, _)), Some(&(y1, _))) = (points.first(), points.last()) else {
            continue;
        };
        let mut series = AnnualSeries::zeros(y0, y1, *q, *s);
        for &(y, v) in points {
            series.add(y, v);
        }
        let path = series_dir.join(format!("{s}_{q}.csv"));
        series.write_csv(BufWriter::new(File::create(&path)?))?;
        written.push(path);
        for (start, total) in series.block_sums(y0, PERIOD_YEARS) {
            let end = (start + PERIOD_YEARS - 1).min(y1);
            sums_w.write_record([s.to_string(), q.to_string(), start.to_string(), end.to_string(), total.to_string()])?;
        }
    }
    sums_w.flush()?;
    drop(sums_w);
    written.push(sums);

    // annual event counts per severity quintile, before and after correction
    let (sev_rows, c, factors) = load_correction(ctx)?;
    let first = cfg.first_start_year();
    let mut counts = QuintileSeries::zeros(first, cfg.end_year);
    for (&y, &q) in c.years.iter().zip(&c.quintile) {
        counts.add(y, q, 1.0);
    }
    let corrected = apply_correction(&counts, &factors, SeriesKind::Count);
    let quint = ctx.out("quintile_events.csv");
    {
        let mut w = BufWriter::new(File::create(&quint)?);
        writeln!(w, "year,q1,q2,q3,q4,q5,corrected_q1,corrected_q2,corrected_q3,corrected_q4,corrected_q5")?;
        for (i, y) in (first..=cfg.end_year).enumerate() {
            let raw: Vec<String> = counts.values.iter().map(|v| v[i].to_string()).collect();
            let cor: Vec<String> = corrected.values.iter().map(|v| v[i].to_string()).collect();
            writeln!(w, "{y},{},{}", raw.join(","), cor.join(","))?;
        }
        w.flush()?;
    }
    written.push(quint);

    let catalog: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ctx.out(CATALOG_SUMMARY))?)?;
    let ratios = read_ratios(&ctx.out(RATIOS))?;
    let tested = trends.iter().filter(|r| r.rate_percent.is_some()).count();
    let summary = serde_json::json!({
        "catalog": catalog,
        "seed": cfg.seed,
        "baseline_year": cfg.baseline_year,
        "start_years": start_years,
        "end_year": cfg.end_year,
        "mc_replicates": cfg.mc_replicates,
        "conditional_samples": cfg.conditional_samples,
        "significance_reliable": cfg.mc_replicates >= MIN_REPLICATES_FOR_CLAIMS,
        "reference_period": cfg.reference_period,
        "reference_ratios_q4_q3_q2_q1": ratios,
        "ranked_events": c.quintile.len(),
        "unranked_events": sev_rows.len() - c.quintile.len(),
        "trend_tests": tested,
        "trend_tests_untestable": trends.len() - tested,
        "significant_trends": trends.iter().filter(|r| r.significant == Some(true)).count(),
        "t_test_disagreements": trends
            .iter()
            .filter(|r| r.t_test_significant.is_some() && r.t_test_significant != r.significant)
            .count(),
    });
    let path = ctx.out("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    written.push(path);
    Ok(written)
}
