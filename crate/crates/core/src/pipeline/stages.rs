use super::artifacts::*;
use super::{report, Ctx, PipelineStage, StageResult};
use crate::events::{parse_catalog, summarize, write_catalog, FloodEvent};
use crate::exec::Execution;
use crate::exposure::{
    backcast, disaggregate_economy, exposure_in, load_grid_dir, write_exposure_grids, BackcastConfig, DensityCaps,
    ExposureGrid, RegionId, RegionStats,
};
use crate::footprint::{build_footprints, read_footprints, write_footprints, HazardMasks, RegionIndex, RegionTable};
use crate::gapfill::{
    fit_dependence, gap_fill, read_filled_catalog, read_samples, write_filled_catalog, write_samples,
    DependenceTable, FilledEvent, GapFillConfig, GapFillInput, Variable,
};
use crate::grid::{AsciiGrid, Raster};
use crate::normalize::{factors_from_aggregates, normalize, relative_damages, write_normalized};
use crate::trend::{
    aggregate_annual, mc_significance, mc_significance_normalized, wald_t_test, AnnualItem, ExposureUncertainty,
    McConfig, McEvent, Quantity, Stage, TrendError,
};
use crate::underreport::{
    classify_severity, correction_factors, reference_ratios, CorrectionFactors, SeverityClassification,
    SeverityInput, ADJUSTED_PERIODS,
};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

pub const EVENTS: &str = "events.csv";
pub const REJECTED: &str = "rejected.csv";
pub const CATALOG_SUMMARY: &str = "catalog_summary.json";
pub const REGIONAL_TOTALS: &str = "regional_totals.csv";
pub const FOOTPRINTS: &str = "footprints.csv";
pub const EMPTY_FOOTPRINTS: &str = "empty_footprints.csv";
pub const NORMALIZED: &str = "normalized.csv";
pub const RELATIVE: &str = "relative_damages.csv";
pub const EXPOSURE_FACTORS: &str = "exposure_factors.csv";
pub const NORMALIZE_SKIPPED: &str = "normalize_skipped.csv";
pub const DEPENDENCE: &str = "dependence.csv";
pub const FILLED: &str = "filled.csv";
pub const SAMPLES: &str = "gapfill_samples.bin";
pub const GAPFILL_SKIPPED: &str = "gapfill_skipped.csv";
pub const SEVERITY: &str = "severity.csv";
pub const FACTORS: &str = "underreporting_factors.csv";
pub const RATIOS: &str = "reference_ratios.csv";
pub const TRENDS: &str = "trends.csv";
pub const SERIES: &str = "series.csv";
pub const BANDS: &str = "bands.csv";

pub fn inputs(ctx: &Ctx, stage: PipelineStage) -> Vec<PathBuf> {
    let c = ctx.cfg;
    let o = |n: &str| ctx.out(n);
    match stage {
        PipelineStage::Ingest => vec![c.events.clone()],
        PipelineStage::Backcast => vec![c.grid_dir.clone(), c.region_stats.clone()],
        PipelineStage::Footprints => {
            let mut v = vec![
                o(EVENTS),
                c.grid_dir.join("region.asc"),
                c.river_mask.clone(),
                c.coastal_mask.clone(),
            ];
            v.extend(c.region_codes.clone());
            v
        }
        PipelineStage::Normalize => vec![o(EVENTS), o(FOOTPRINTS), c.grid_dir.clone(), c.region_stats.clone()],
        PipelineStage::FitCopulas => vec![o(RELATIVE)],
        PipelineStage::GapFill => vec![o(EVENTS), o(NORMALIZED), o(RELATIVE), o(DEPENDENCE)],
        PipelineStage::Underreport => vec![o(FILLED)],
        PipelineStage::Trend => vec![
            o(EVENTS),
            o(NORMALIZED),
            o(RELATIVE),
            o(EXPOSURE_FACTORS),
            o(FILLED),
            o(SAMPLES),
            o(SEVERITY),
            o(RATIOS),
        ],
        PipelineStage::Report => vec![o(CATALOG_SUMMARY), o(TRENDS), o(SERIES), o(SEVERITY), o(RATIOS)],
    }
}

pub fn run_stage(ctx: &Ctx, stage: PipelineStage) -> StageResult<Vec<PathBuf>> {
    match stage {
        PipelineStage::Ingest => ingest(ctx),
        PipelineStage::Backcast => backcast_stage(ctx),
        PipelineStage::Footprints => footprints(ctx),
        PipelineStage::Normalize => normalize_stage(ctx),
        PipelineStage::FitCopulas => fit_copulas(ctx),
        PipelineStage::GapFill => gap_fill_stage(ctx),
        PipelineStage::Underreport => underreport(ctx),
        PipelineStage::Trend => trend(ctx),
        PipelineStage::Report => report::report(ctx),
    }
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> StageResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn ingest(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let parsed = parse_catalog(File::open(&ctx.cfg.events)?)?;
    for d in &parsed.rejected {
        log::warn!("rejected {d}");
    }
    let events_path = ctx.out(EVENTS);
    write_catalog(BufWriter::new(File::create(&events_path)?), &parsed.events)?;

    #[derive(Serialize)]
    struct Rejected<'a> {
        line: u64,
        id: &'a str,
        rule: String,
    }
    let rows: Vec<Rejected> = parsed
        .rejected
        .iter()
        .map(|d| Rejected {
            line: d.line,
            id: &d.id,
            rule: d.rule.to_string(),
        })
        .collect();
    let rejected = ctx.out(REJECTED);
    write_rows_with_header(&rejected, &["line", "id", "rule"], &rows)?;
    let summary = ctx.out(CATALOG_SUMMARY);
    write_json(&summary, &summarize(&parsed.events))?;
    Ok(vec![events_path, rejected, summary])
}

fn read_stats(ctx: &Ctx) -> StageResult<RegionStats> {
    Ok(RegionStats::read(File::open(&ctx.cfg.region_stats)?)?)
}

fn baseline_grid(ctx: &Ctx, stats: &RegionStats) -> StageResult<ExposureGrid> {
    let g = load_grid_dir(&ctx.cfg.grid_dir, ctx.cfg.baseline_year, &DensityCaps::default())?;
    Ok(disaggregate_economy(&g, stats)?)
}

/// Exposure grid of `year` with GDP and wealth. Years after the baseline
/// keep the baseline land use and scale population per region.
fn grid_for_year(base: &ExposureGrid, stats: &RegionStats, year: i32, exec: Execution) -> StageResult<ExposureGrid> {
    let g = if year == base.year {
        return Ok(base.clone());
    } else if year < base.year {
        backcast(base, stats, year, &BackcastConfig::default(), exec)?
    } else {
        let mut g = base.clone();
        g.year = year;
        let mut ratio: BTreeMap<RegionId, f64> = BTreeMap::new();
        for (region, _) in base.region_cells() {
            let missing = || format!("no statistics for region {region} in {year}");
            let then = stats.get(region, year).ok_or_else(missing)?.total_population;
            let now = stats.get(region, base.year).ok_or_else(missing)?.total_population;
            ratio.insert(region, if now > 0.0 { then / now } else { 1.0 });
        }
        for c in g.cells.iter_mut() {
            if let Some(r) = c.region {
                c.population *= ratio[&r];
            }
        }
        g
    };
    Ok(disaggregate_economy(&g, stats)?)
}

#[derive(Serialize)]
struct TotalsRow {
    region: RegionId,
    year: i32,
    population: f64,
    gdp: f64,
    wealth: f64,
}

fn backcast_stage(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let stats = read_stats(ctx)?;
    let base = baseline_grid(ctx, &stats)?;
    let years: BTreeSet<i32> = ctx.cfg.backcast_years.iter().copied().collect();
    let mut written = Vec::new();
    let mut totals = Vec::new();
    for &year in &years {
        let g = grid_for_year(&base, &stats, year, ctx.exec)?;
        written.extend(write_exposure_grids(&g, &ctx.out(&format!("backcast/{year}")))?);
        for (region, t) in g.region_totals() {
            totals.push(TotalsRow {
                region,
                year,
                population: t.population,
                gdp: t.gdp,
                wealth: t.wealth,
            });
        }
    }
    let path = ctx.out(REGIONAL_TOTALS);
    write_rows_with_header(&path, &["region", "year", "population", "gdp", "wealth"], &totals)?;
    written.push(path);
    Ok(written)
}

fn read_mask(path: &std::path::Path) -> StageResult<Raster<bool>> {
    let g = AsciiGrid::read_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(g.to_options().map(|v| v.is_some_and(|x| x != 0.0)))
}

fn read_region_grid(ctx: &Ctx) -> StageResult<Raster<Option<RegionId>>> {
    let path = ctx.cfg.grid_dir.join("region.asc");
    let g = AsciiGrid::read_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(g.to_options().map(|v| v.map(|x| x as RegionId)))
}

fn footprints(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let events = read_events(&ctx.out(EVENTS))?;
    let regions = read_region_grid(ctx)?;
    let masks = HazardMasks {
        river: read_mask(&ctx.cfg.river_mask)?,
        coastal: read_mask(&ctx.cfg.coastal_mask)?,
    };
    let table = match &ctx.cfg.region_codes {
        Some(p) => RegionTable::read(File::open(p)?)?,
        None => RegionTable::default(),
    };
    let fps = build_footprints(&events, &masks, &RegionIndex::new(&regions), &table, ctx.exec)?;
    let path = ctx.out(FOOTPRINTS);
    write_footprints(BufWriter::new(File::create(&path)?), &fps)?;

    #[derive(Serialize)]
    struct Empty<'a> {
        event_id: &'a str,
    }
    let empty: Vec<Empty> = fps
        .iter()
        .filter(|f| f.empty)
        .map(|f| Empty { event_id: &f.event_id })
        .collect();
    if !empty.is_empty() {
        log::warn!("{} events have an empty footprint", empty.len());
    }
    let empty_path = ctx.out(EMPTY_FOOTPRINTS);
    write_rows_with_header(&empty_path, &["event_id"], &empty)?;
    Ok(vec![path, empty_path])
}

#[derive(Serialize)]
struct SkipRow {
    event_id: String,
    reason: String,
}

fn normalize_stage(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let events = read_events(&ctx.out(EVENTS))?;
    let ids: Vec<String> = events.iter().map(|e| e.id.clone()).collect();
    let fps = read_footprints(File::open(ctx.out(FOOTPRINTS))?, &ids)?;
    let stats = read_stats(ctx)?;
    let base = baseline_grid(ctx, &stats)?;

    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, (e, f)) in events.iter().zip(&fps).enumerate() {
        if !f.empty {
            by_year.entry(e.year).or_default().push(i);
        }
    }
    let years: Vec<(i32, Vec<usize>)> = by_year.into_iter().collect();
    // one exposure grid per event year, years in parallel
    let per_year = ctx.exec.try_map(years.len(), |k| {
        let (year, members) = &years[k];
        let g = grid_for_year(&base, &stats, *year, Execution::Sequential).map_err(|e| e.to_string())?;
        Ok::<_, String>(
            members
                .iter()
                .map(|&i| (i, exposure_in(&fps[i], &g), exposure_in(&fps[i], &base)))
                .collect::<Vec<_>>(),
        )
    })?;
    let mut aggregates = BTreeMap::new();
    for v in per_year.into_iter().flatten() {
        aggregates.insert(v.0, (v.1, v.2));
    }

    let mut records = Vec::new();
    let mut relative = Vec::new();
    let mut skipped = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let Some((then, now)) = aggregates.get(&i) else {
            skipped.push(SkipRow {
                event_id: e.id.clone(),
                reason: "empty footprint".into(),
            });
            continue;
        };
        let factors = match factors_from_aggregates(&e.id, then, now) {
            Ok(f) => f,
            Err(err) => {
                log::warn!("{err}");
                skipped.push(SkipRow {
                    event_id: e.id.clone(),
                    reason: err.to_string(),
                });
                continue;
            }
        };
        let rec = normalize(e, factors);
        let area = fps[i].area_km2(base.cellsize);
        let d = relative_damages(&rec, now, area);
        relative.push(RelativeRow {
            id: e.id.clone(),
            year: e.year,
            area: d.area,
            fatalities: d.fatalities,
            affected: d.affected,
            losses_gdp: d.losses_gdp,
            losses_wealth: d.losses_wealth,
            footprint_area_km2: area,
            population: now.population,
            gdp: now.gdp,
            wealth: now.wealth,
        });
        records.push(rec);
    }

    let mut factor_rows = Vec::new();
    for (region, year, st) in stats.iter() {
        if year < ctx.cfg.first_start_year() || year > ctx.cfg.end_year {
            continue;
        }
        let Some(b) = stats.get(region, ctx.cfg.baseline_year) else {
            continue;
        };
        let ratio = |now: f64, then: f64| if then > 0.0 { now / then } else { f64::NAN };
        factor_rows.push(ExposureFactorRow {
            region,
            year,
            population: ratio(b.total_population, st.total_population),
            gdp: ratio(b.gdp.total(), st.gdp.total()),
            wealth: ratio(b.wealth.total(), st.wealth.total()),
        });
    }

    let norm = ctx.out(NORMALIZED);
    write_normalized(BufWriter::new(File::create(&norm)?), &records)?;
    let rel = ctx.out(RELATIVE);
    write_rows_with_header(
        &rel,
        &[
            "id",
            "year",
            "area",
            "fatalities",
            "affected",
            "losses_gdp",
            "losses_wealth",
            "footprint_area_km2",
            "population",
            "gdp",
            "wealth",
        ],
        &relative,
    )?;
    let fac = ctx.out(EXPOSURE_FACTORS);
    write_rows_with_header(&fac, &["region", "year", "population", "gdp", "wealth"], &factor_rows)?;
    let skip = ctx.out(NORMALIZE_SKIPPED);
    write_rows_with_header(&skip, &["event_id", "reason"], &skipped)?;
    Ok(vec![norm, rel, fac, skip])
}

fn fit_copulas(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let rows: Vec<RelativeRow> = read_rows(&ctx.out(RELATIVE))?;
    let rel: Vec<[Option<f64>; 5]> = rows.iter().map(RelativeRow::relative).collect();
    let table = fit_dependence(&rel, ctx.exec)?;
    let path = ctx.out(DEPENDENCE);
    table.write(BufWriter::new(File::create(&path)?))?;
    Ok(vec![path])
}

fn gap_fill_stage(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let events = read_events(&ctx.out(EVENTS))?;
    let normalized = read_normalized(&ctx.out(NORMALIZED))?;
    let rows: Vec<RelativeRow> = read_rows(&ctx.out(RELATIVE))?;
    let table = DependenceTable::read(File::open(ctx.out(DEPENDENCE))?)?;
    if normalized.len() != rows.len() || normalized.iter().zip(&rows).any(|(n, r)| n.event_id != r.id) {
        return Err(format!("{NORMALIZED} and {RELATIVE} list different events").into());
    }
    let inputs: Vec<GapFillInput> = normalized
        .iter()
        .zip(&rows)
        .map(|(n, r)| GapFillInput {
            event_id: n.event_id.clone(),
            values: [n.area_km2, n.fatalities, n.persons_affected, n.losses_by_gdp, n.losses_by_wealth],
            relative: r.relative(),
            potential: r.potential(),
        })
        .collect();
    let config = GapFillConfig {
        samples: ctx.cfg.conditional_samples,
        seed: ctx.seed_for("gap-fill"),
        ..Default::default()
    };
    let out = gap_fill(&inputs, &table, &config, ctx.exec)?;
    let filled = ctx.out(FILLED);
    write_filled_catalog(BufWriter::new(File::create(&filled)?), &events, &out.records)?;
    let samples = ctx.out(SAMPLES);
    write_samples(BufWriter::new(File::create(&samples)?), &out.samples)?;
    let skipped: Vec<SkipRow> = out
        .skipped
        .into_iter()
        .map(|(event_id, reason)| SkipRow { event_id, reason })
        .collect();
    let skip = ctx.out(GAPFILL_SKIPPED);
    write_rows_with_header(&skip, &["event_id", "reason"], &skipped)?;
    Ok(vec![filled, samples, skip])
}

/// Index of a filled-catalog value among the severity variables.
const SEVERITY_COLUMNS: [Variable; 4] = [
    Variable::Area,
    Variable::Fatalities,
    Variable::Affected,
    Variable::LossesWealth,
];

fn underreport(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let filled = read_filled_catalog(File::open(ctx.out(FILLED))?)?;
    let inputs: Vec<SeverityInput> = filled
        .iter()
        .map(|e| SeverityInput {
            event_id: e.id.clone(),
            year: e.year,
            values: SEVERITY_COLUMNS.map(|v| e.values[v.index()]),
        })
        .collect();
    let (complete, partial): (Vec<_>, Vec<_>) = inputs.into_iter().partition(|s| s.values.iter().all(Option::is_some));
    if !partial.is_empty() {
        log::warn!("{} events lack a severity variable and are not ranked", partial.len());
    }
    let c = classify_severity(&complete)?;
    let [a, b] = ctx.cfg.reference_period;
    let ratios = reference_ratios(&c, (a, b))?;
    let factors = correction_factors(&c, &ratios, &ADJUSTED_PERIODS)?;

    let mut rows: Vec<SeverityRow> = (0..c.event_ids.len())
        .map(|i| SeverityRow {
            id: c.event_ids[i].clone(),
            year: c.years[i],
            average_rank: Some(c.average_rank[i]),
            quintile: Some(c.quintile[i]),
        })
        .collect();
    rows.extend(partial.into_iter().map(|s| SeverityRow {
        id: s.event_id,
        year: s.year,
        average_rank: None,
        quintile: None,
    }));
    let order: BTreeMap<&str, usize> = filled.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    rows.sort_by_key(|r| order[r.id.as_str()]);

    let sev = ctx.out(SEVERITY);
    write_rows_with_header(&sev, &["id", "year", "average_rank", "quintile"], &rows)?;
    let fac = ctx.out(FACTORS);
    factors.write(BufWriter::new(File::create(&fac)?))?;
    let rat = ctx.out(RATIOS);
    let ratio_rows: Vec<RatioRow> = (0..4)
        .map(|k| RatioRow {
            quintile: 4 - k as u8,
            ratio_to_top: ratios[k],
        })
        .collect();
    write_rows(&rat, &ratio_rows)?;
    Ok(vec![sev, fac, rat])
}

/// Classification of the ranked events and the factors derived from it.
pub fn load_correction(ctx: &Ctx) -> StageResult<(Vec<SeverityRow>, SeverityClassification, CorrectionFactors)> {
    let rows: Vec<SeverityRow> = read_rows(&ctx.out(SEVERITY))?;
    let ranked: Vec<&SeverityRow> = rows.iter().filter(|r| r.quintile.is_some()).collect();
    let c = SeverityClassification::from_labels(
        ranked.iter().map(|r| r.id.clone()).collect(),
        ranked.iter().map(|r| r.year).collect(),
        ranked.iter().map(|r| r.quintile.unwrap_or(0)).collect(),
    )?;
    let ratios = read_ratios(&ctx.out(RATIOS))?;
    let factors = correction_factors(&c, &ratios, &ADJUSTED_PERIODS)?;
    Ok((rows, c, factors))
}

fn variable_of(q: Quantity) -> Option<Variable> {
    match q {
        Quantity::Area => Some(Variable::Area),
        Quantity::Fatalities => Some(Variable::Fatalities),
        Quantity::Affected => Some(Variable::Affected),
        Quantity::LossesGdp => Some(Variable::LossesGdp),
        Quantity::LossesWealth => Some(Variable::LossesWealth),
        _ => None,
    }
}

/// Exposure table (population, GDP, wealth) that scales a variable.
fn exposure_kind(v: Variable) -> Option<usize> {
    match v {
        Variable::Area => None,
        Variable::Fatalities | Variable::Affected => Some(0),
        Variable::LossesGdp => Some(1),
        Variable::LossesWealth => Some(2),
    }
}

/// Quantities tested per stage, in table order.
pub fn stage_quantities(stage: Stage) -> &'static [Quantity] {
    use Quantity::*;
    match stage {
        Stage::Reported => &[Events, Area, Fatalities, Affected, Losses],
        Stage::Normalized => &[Fatalities, Affected, LossesWealth, LossesGdp],
        Stage::GapFilled => &[Area, Fatalities, Affected, LossesWealth, LossesGdp],
        Stage::UnderreportingCorrected => &[Events, Area, Fatalities, Affected, LossesWealth, LossesGdp],
    }
}

/// Owned event data for one stage; `McEvent`s borrow from it.
struct StageEvent {
    id: String,
    year: i32,
    values: [Option<f64>; 5],
    reported_losses: Option<f64>,
    filled: [bool; 5],
    weight: f64,
}

fn reported_events(events: &[FloodEvent]) -> Vec<StageEvent> {
    events
        .iter()
        .map(|e| StageEvent {
            id: e.id.clone(),
            year: e.year,
            values: [
                e.area_km2,
                e.known_fatalities().map(|v| v as f64),
                e.persons_affected.map(|v| v as f64),
                None,
                None,
            ],
            reported_losses: e.losses_eur2011,
            filled: [false; 5],
            weight: 1.0,
        })
        .collect()
}

fn filled_events(filled: &[FilledEvent], weights: Option<&BTreeMap<String, f64>>) -> Vec<StageEvent> {
    filled
        .iter()
        .map(|e| StageEvent {
            id: e.id.clone(),
            year: e.year,
            values: e.values,
            reported_losses: None,
            filled: e.filled,
            weight: weights.and_then(|w| w.get(&e.id).copied()).unwrap_or(1.0),
        })
        .collect()
}

fn trend(ctx: &Ctx) -> StageResult<Vec<PathBuf>> {
    let cfg = ctx.cfg;
    let events = read_events(&ctx.out(EVENTS))?;
    let normalized = read_normalized(&ctx.out(NORMALIZED))?;
    let rel: Vec<RelativeRow> = read_rows(&ctx.out(RELATIVE))?;
    let year_of: BTreeMap<&str, i32> = rel.iter().map(|r| (r.id.as_str(), r.year)).collect();
    let filled = read_filled_catalog(File::open(ctx.out(FILLED))?)?;
    let samples = read_samples(std::io::BufReader::new(File::open(ctx.out(SAMPLES))?))?;
    let (sev_rows, _, factors) = load_correction(ctx)?;
    let weights: BTreeMap<String, f64> = sev_rows
        .iter()
        .filter_map(|r| r.quintile.map(|q| (r.id.clone(), factors.factor(r.year, q))))
        .collect();

    let factor_rows: Vec<ExposureFactorRow> = read_rows(&ctx.out(EXPOSURE_FACTORS))?;
    let tables = factor_tables(&factor_rows);
    let uncertainty: Vec<Option<ExposureUncertainty>> = tables
        .iter()
        .zip(["population", "gdp", "wealth"])
        .map(|(t, name)| match ExposureUncertainty::fit(t) {
            Ok(u) => Some(u),
            Err(e) => {
                log::warn!("no {name} exposure uncertainty: {e}");
                None
            }
        })
        .collect();

    let mut by_stage: Vec<(Stage, Vec<StageEvent>)> = vec![(Stage::Reported, reported_events(&events))];
    let mut norm_events = Vec::with_capacity(normalized.len());
    for n in &normalized {
        let year = *year_of
            .get(n.event_id.as_str())
            .ok_or_else(|| format!("{} missing from {RELATIVE}", n.event_id))?;
        norm_events.push(StageEvent {
            id: n.event_id.clone(),
            year,
            values: [n.area_km2, n.fatalities, n.persons_affected, n.losses_by_gdp, n.losses_by_wealth],
            reported_losses: None,
            filled: [false; 5],
            weight: 1.0,
        });
    }
    by_stage.push((Stage::Normalized, norm_events));
    by_stage.push((Stage::GapFilled, filled_events(&filled, None)));
    by_stage.push((Stage::UnderreportingCorrected, filled_events(&filled, Some(&weights))));

    let first = cfg.first_start_year();
    let mut trend_rows = Vec::new();
    let mut series_rows = Vec::new();
    let mut band_rows = Vec::new();
    let mut dumps = Vec::new();
    let mut start_years = cfg.start_years.clone();
    start_years.sort_unstable();
    start_years.dedup();

    for (stage, evs) in &by_stage {
        for &q in stage_quantities(*stage) {
            let var = variable_of(q);
            let sigma_of = |e: &StageEvent| -> f64 {
                if *stage == Stage::Reported {
                    return 0.0;
                }
                var.and_then(exposure_kind)
                    .and_then(|k| uncertainty[k].as_ref())
                    .and_then(|u| u.at(e.year))
                    .map_or(0.0, |f| f.sigma)
            };
            let mc_events: Vec<McEvent> = evs
                .iter()
                .map(|e| {
                    let value = match (q, var) {
                        (Quantity::Losses, _) => e.reported_losses,
                        (_, Some(v)) => e.values[v.index()],
                        _ => None,
                    };
                    let filled_var = var.filter(|v| e.filled[v.index()]);
                    McEvent {
                        id: &e.id,
                        year: e.year,
                        value,
                        weight: e.weight,
                        exposure_sigma: if filled_var.is_some() { 0.0 } else { sigma_of(e) },
                        samples: filled_var
                            .and_then(|v| samples.get(&(e.id.clone(), v)))
                            .map(Vec::as_slice),
                    }
                })
                .collect();

            let items: Vec<AnnualItem> = mc_events
                .iter()
                .map(|e| AnnualItem {
                    year: e.year,
                    value: e.value,
                    weight: e.weight,
                })
                .collect();
            let series = aggregate_annual(&items, q, *stage, (first, cfg.end_year))?;
            for (y, v) in series.years().zip(&series.values) {
                series_rows.push(SeriesRow {
                    stage: stage.to_string(),
                    quantity: q.to_string(),
                    year: y,
                    value: *v,
                });
            }

            for &start in &start_years {
                let label = format!("{stage}/{q}/{start}");
                let mc = McConfig {
                    replicates: cfg.mc_replicates,
                    seed: ctx.seed_for(&format!("mc/{label}")),
                    sidedness: cfg.mc_sidedness,
                    alpha: cfg.alpha,
                    window: None,
                };
                let period = (start, cfg.end_year);
                let outcome = if *stage == Stage::Reported {
                    mc_significance(&mc_events, q, *stage, period, &mc, ctx.exec)
                } else {
                    mc_significance_normalized(&mc_events, q, *stage, period, &mc, ctx.exec)
                };
                let mut row = TrendRow {
                    stage: stage.to_string(),
                    quantity: q.to_string(),
                    start_year: start,
                    end_year: cfg.end_year,
                    rate_percent: None,
                    b: None,
                    mc_p: None,
                    significant: None,
                    ci_low: None,
                    ci_high: None,
                    replicates: 0,
                    t_test_significant: None,
                    note: String::new(),
                };
                match outcome {
                    Ok(o) => {
                        row.rate_percent = Some(o.result.rate_percent_per_year);
                        row.b = Some(o.result.b);
                        row.mc_p = Some(o.result.mc_p);
                        row.significant = Some(o.result.significant);
                        row.ci_low = Some(o.result.ci_low);
                        row.ci_high = Some(o.result.ci_high);
                        row.replicates = o.result.mc_replicates;
                        let t = wald_t_test(&o.observed, cfg.alpha);
                        row.t_test_significant = Some(t);
                        if t != o.result.significant {
                            row.note = "t-test disagrees".into();
                        }
                        if start == first {
                            for (y, (lo, mid, hi)) in (start..).zip(&o.band) {
                                band_rows.push(BandRow {
                                    stage: stage.to_string(),
                                    quantity: q.to_string(),
                                    year: y,
                                    p2_5: *lo,
                                    p50: *mid,
                                    p97_5: *hi,
                                });
                            }
                        }
                        if cfg.dump_replicates {
                            let dir = ctx.out("trend_replicates");
                            std::fs::create_dir_all(&dir)?;
                            let path = dir.join(format!("{stage}_{q}_{start}.csv"));
                            o.write_rates(BufWriter::new(File::create(&path)?))?;
                            dumps.push(path);
                        }
                    }
                    Err(e @ (TrendError::Degenerate | TrendError::ReplicateFailures { .. })) => {
                        log::warn!("{label}: {e}");
                        row.note = e.to_string();
                    }
                    Err(e) => return Err(format!("{label}: {e}").into()),
                }
                trend_rows.push(row);
            }
        }
    }

    let trends = ctx.out(TRENDS);
    write_rows(&trends, &trend_rows)?;
    let series = ctx.out(SERIES);
    write_rows(&series, &series_rows)?;
    let bands = ctx.out(BANDS);
    write_rows_with_header(&bands, &["stage", "quantity", "year", "p2_5", "p50", "p97_5"], &band_rows)?;
    let mut out = vec![trends, series, bands];
    out.extend(dumps);
    Ok(out)
}
