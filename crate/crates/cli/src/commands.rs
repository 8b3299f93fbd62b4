//! One function per subcommand. Members run in parallel; files are written
//! afterwards in a fixed order so reruns reproduce identical checksums.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use tribaker::classical::{
    allowed_area_sequence, escape_rate, monte_carlo_area, monte_carlo_sigma, AreaSequence, OpeningSpec,
};
use tribaker::grid::PhaseGrid;
use tribaker::phasespace::{member_nr, norm_ratio, repeller_operator, resonance_husimis, CoherentFrame, NrTable};
use tribaker::spectral::{decay_rates, eigendecompose_with, eigenvalues, histogram_of_moduli, ConditionPolicy};

use crate::args::Format;
use crate::cache::OperatorCache;
use crate::config::RunConfig;
use crate::manifest::{Diagnostics, OutputSet, RunManifest};
use crate::Result;

fn members(config: &RunConfig) -> Result<Vec<OpeningSpec>> {
    let mut specs = Vec::new();
    for &family in &config.families {
        for &k in &config.ks {
            specs.push(OpeningSpec::new(family, k, config.l)?);
        }
    }
    Ok(specs)
}

fn stem(spec: &OpeningSpec) -> String {
    format!("{}_l{}_k{}", spec.family(), spec.l(), spec.k())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct SpectrumRow {
    j: usize,
    re_lambda: f64,
    im_lambda: f64,
    modulus: f64,
    /// `None` for an exact zero eigenvalue.
    gamma: Option<f64>,
}

pub fn spectrum(config: &RunConfig, cache: &OperatorCache) -> Result<RunManifest> {
    let specs = members(config)?;
    let results = specs
        .par_iter()
        .map(|spec| -> Result<_> {
            let (op, status) = cache.open_map(spec)?;
            let set = eigendecompose_with(&op, ConditionPolicy::Report)?;
            let mut diag = Diagnostics::new(spec.family(), spec.l(), spec.k(), Some(status));
            diag.residual_max = Some(set.residual_max());
            diag.condition = Some(set.condition());
            diag.left_residual_max = Some(set.left_residual_max(op.matrix()));
            let mut csv = Vec::new();
            set.write_spectrum_csv(&mut csv)?;
            let rows: Vec<SpectrumRow> = set
                .eigenvalues()
                .iter()
                .zip(decay_rates(&set))
                .enumerate()
                .map(|(i, (z, g))| SpectrumRow {
                    j: i + 1,
                    re_lambda: z.re,
                    im_lambda: z.im,
                    modulus: z.norm(),
                    gamma: g.is_finite().then_some(g),
                })
                .collect();
            Ok((csv, rows, diag))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputSet::create(&config.out)?;
    let mut overlay = String::from("family,k,j,re_lambda,im_lambda,modulus\n");
    let mut diagnostics = Vec::new();
    for (spec, (csv, rows, diag)) in specs.iter().zip(results) {
        let meta = json!({
            "family": spec.family(), "l": spec.l(), "k": spec.k(),
            "condition": diag.condition, "residual_max": diag.residual_max,
        });
        if config.wants(Format::Csv) {
            out.write(&format!("spectrum_{}.csv", stem(spec)), &csv, Some(meta.clone()))?;
        }
        if config.wants(Format::Json) {
            out.write(&format!("spectrum_{}.json", stem(spec)), &json_bytes(&rows)?, Some(meta))?;
        }
        for r in &rows {
            overlay.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                spec.family(),
                spec.k(),
                r.j,
                r.re_lambda,
                r.im_lambda,
                r.modulus
            ));
        }
        diagnostics.push(diag);
    }
    if config.wants(Format::Csv) {
        out.write(&format!("spectrum_overlay_l{}.csv", config.l), overlay.as_bytes(), None)?;
    }
    out.finish(config, diagnostics)
}

pub fn histogram(config: &RunConfig, cache: &OperatorCache) -> Result<RunManifest> {
    let specs = members(config)?;
    let results = specs
        .par_iter()
        .map(|spec| -> Result<_> {
            let (op, status) = cache.open_map(spec)?;
            let moduli: Vec<f64> = eigenvalues(&op)?.iter().map(|z| z.norm()).collect();
            let hist = histogram_of_moduli(&moduli, config.bins)?;
            Ok((hist, Diagnostics::new(spec.family(), spec.l(), spec.k(), Some(status))))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputSet::create(&config.out)?;
    let mut diagnostics = Vec::new();
    for (spec, (hist, diag)) in specs.iter().zip(results) {
        let meta = json!({
            "family": spec.family(), "l": spec.l(), "k": spec.k(),
            "bins": hist.bins(), "total": hist.total(), "mode_bin": hist.mode(),
        });
        if config.wants(Format::Csv) {
            let mut csv = Vec::new();
            hist.write_csv(&mut csv)?;
            out.write(&format!("histogram_{}.csv", stem(spec)), &csv, Some(meta.clone()))?;
        }
        if config.wants(Format::Json) {
            let body = json!({ "edges": hist.edges(), "counts": hist.counts() });
            out.write(&format!("histogram_{}.json", stem(spec)), &json_bytes(&body)?, Some(meta))?;
        }
        diagnostics.push(diag);
    }
    out.finish(config, diagnostics)
}

fn write_grid(
    out: &mut OutputSet,
    config: &RunConfig,
    name: &str,
    grid: &PhaseGrid,
    mut meta: serde_json::Value,
) -> Result<()> {
    if config.wants(Format::Pgm) {
        let mut pgm = Vec::new();
        let info = grid.write_pgm(&mut pgm)?;
        meta["pgm"] = serde_json::to_value(info)?;
        out.write(&format!("{name}.pgm"), &pgm, Some(meta.clone()))?;
    }
    if config.wants(Format::Csv) {
        let mut csv = Vec::new();
        grid.write_csv(&mut csv)?;
        out.write(&format!("{name}.csv"), &csv, Some(meta.clone()))?;
    }
    if config.wants(Format::Json) {
        let body = json!({ "size": grid.size(), "values": grid.values() });
        out.write(&format!("{name}.json"), &json_bytes(&body)?, Some(meta))?;
    }
    Ok(())
}

pub fn husimi(config: &RunConfig, cache: &OperatorCache) -> Result<RunManifest> {
    let specs = members(config)?;
    let frame = CoherentFrame::new(config.dim(), config.grid)?;
    let repeller = repeller_operator(config.l, &frame)?;
    let count = config.states.iter().chain(&config.cumulative).copied().max().unwrap_or(0);
    let results = specs
        .par_iter()
        .map(|spec| -> Result<_> {
            let (op, status) = cache.open_map(spec)?;
            let mut set = eigendecompose_with(&op, ConditionPolicy::Report)?;
            let mut diag = Diagnostics::new(spec.family(), spec.l(), spec.k(), Some(status));
            diag.residual_max = Some(set.residual_max());
            diag.condition = Some(set.condition());
            diag.left_residual_max = Some(set.refine_left(op.matrix(), count));
            let grids = resonance_husimis(&set, &frame, count)?;
            diag.excluded = grids.excluded.clone();
            let moduli = set.moduli();
            Ok((grids, moduli, diag))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputSet::create(&config.out)?;
    let rep_meta = json!({
        "l": config.l, "grid": config.grid, "nr": repeller.report.nr,
        "trace": repeller.operator.trace().re,
    });
    write_grid(&mut out, config, &format!("repeller_l{}", config.l), &repeller.husimi, rep_meta)?;
    let mut diagnostics = Vec::new();
    for (spec, (grids, moduli, diag)) in specs.iter().zip(results) {
        let selections = config
            .states
            .iter()
            .map(|&j| ("h", j, &grids.h[j - 1]))
            .chain(config.cumulative.iter().map(|&j| ("Q", j, &grids.q[j - 1])));
        for (kind, j, grid) in selections {
            // near-defective entries are listed in the diagnostics instead
            let Some(grid) = grid else { continue };
            let meta = json!({
                "family": spec.family(), "l": spec.l(), "k": spec.k(), "kind": kind, "j": j,
                "lambda_modulus": moduli[j - 1], "grid": config.grid,
                "nr": norm_ratio(grid, &frame)?.nr,
            });
            write_grid(&mut out, config, &format!("husimi_{}_{kind}{j}", stem(spec)), grid, meta)?;
        }
        diagnostics.push(diag);
    }
    out.finish(config, diagnostics)
}

pub fn nr_scan(config: &RunConfig, cache: &OperatorCache) -> Result<RunManifest> {
    let frame = CoherentFrame::new(config.dim(), config.grid)?;
    let threshold = repeller_operator(config.l, &frame)?.report.nr;
    let count = config.m_values.iter().copied().max().unwrap_or(1);
    let specs = members(config)?;
    let results = specs
        .par_iter()
        .map(|spec| -> Result<_> {
            let (op, status) = cache.open_map(spec)?;
            let member = member_nr(spec, &op, &frame, count)?;
            let mut diag = Diagnostics::new(spec.family(), spec.l(), spec.k(), Some(status));
            diag.residual_max = Some(member.residual_max);
            diag.condition = Some(member.condition);
            diag.left_residual_max = Some(member.left_residual_max);
            diag.excluded = member.excluded.clone();
            Ok((member, diag))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputSet::create(&config.out)?;
    let mut diagnostics = Vec::new();
    let mut results = results.into_iter();
    for &family in &config.families {
        let mut table = NrTable {
            family,
            l: config.l,
            grid: config.grid,
            m_values: config.m_values.clone(),
            threshold,
            members: Vec::new(),
        };
        for _ in &config.ks {
            let (member, diag) = results.next().expect("one result per member");
            table.members.push(member);
            diagnostics.push(diag);
        }
        let averages: Vec<_> = table
            .members
            .iter()
            .map(|m| {
                json!({
                    "k": m.k,
                    "means": config.m_values.iter().map(|&mv| (mv, m.average(mv))).collect::<Vec<_>>(),
                })
            })
            .collect();
        let meta = json!({ "threshold": threshold, "grid": config.grid, "averages": averages });
        let name = format!("nr_{family}_l{}", config.l);
        if config.wants(Format::Csv) {
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            out.write(&format!("{name}.csv"), &csv, Some(meta.clone()))?;
        }
        if config.wants(Format::Json) {
            out.write(&format!("{name}.json"), &json_bytes(&table)?, Some(meta))?;
        }
    }
    out.finish(config, diagnostics)
}

/// Tail window of an area sequence past the initial transient.
fn tail_window(len: usize, k: usize) -> usize {
    len.saturating_sub(2 * k).clamp(2, len - 1)
}

/// Survivor count below which a sampled area is too noisy to fit.
const MIN_SURVIVORS: f64 = 100.0;

/// Escape rate of a sampled sequence over the prefix that keeps at least
/// [`MIN_SURVIVORS`] points, if long enough.
fn sampled_rate(mc: &AreaSequence, samples: u64, k: usize) -> Option<f64> {
    let positive: Vec<f64> = mc
        .areas()
        .iter()
        .copied()
        .take_while(|&a| a * samples as f64 >= MIN_SURVIVORS)
        .collect();
    if positive.len() < 3 {
        return None;
    }
    let seq = AreaSequence::from_areas(positive).ok()?;
    escape_rate(&seq, tail_window(seq.len(), k)).ok()
}

pub fn classical(config: &RunConfig) -> Result<RunManifest> {
    let specs = members(config)?;
    let results = specs
        .iter()
        .map(|spec| -> Result<_> {
            let exact = allowed_area_sequence(spec, config.steps)?;
            let mc = monte_carlo_area(spec, config.steps, config.samples, config.seed)?;
            let tail = tail_window(exact.len(), spec.k());
            let gamma = escape_rate(&exact, tail)?;
            Ok((exact, mc, tail, gamma))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputSet::create(&config.out)?;
    let mut rates = String::from("family,k,tail,gamma_exact,gamma_monte_carlo,ln_3_2\n");
    let mut rate_rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (spec, (exact, mc, tail, gamma)) in specs.iter().zip(results) {
        let mut csv = String::from("t,exact,exponent,monte_carlo,sigma,z\n");
        let mut rows = Vec::new();
        let mut worst_z = 0.0f64;
        for t in 1..=exact.len() {
            let a = exact.area(t);
            let sigma = monte_carlo_sigma(a, config.samples);
            let z = (mc.area(t) - a) / sigma;
            worst_z = worst_z.max(z.abs());
            let exponent = exact.exponent(t).unwrap_or(0);
            csv.push_str(&format!("{t},{a:e},{exponent},{:e},{sigma:e},{z:.6}\n", mc.area(t)));
            rows.push(json!({ "t": t, "exact": a, "exponent": exponent, "monte_carlo": mc.area(t), "sigma": sigma }));
        }
        let gamma_mc = sampled_rate(&mc, config.samples, spec.k());
        let mc_text = gamma_mc.map_or("nan".to_string(), |g| format!("{g:e}"));
        rates.push_str(&format!(
            "{},{},{tail},{gamma:e},{mc_text},{:e}\n",
            spec.family(),
            spec.k(),
            1.5f64.ln()
        ));
        rate_rows.push(json!({
            "family": spec.family(), "k": spec.k(), "tail": tail,
            "gamma_exact": gamma, "gamma_monte_carlo": gamma_mc,
        }));
        let meta = json!({
            "family": spec.family(), "k": spec.k(), "steps": config.steps,
            "samples": config.samples, "seed": config.seed, "max_abs_z": worst_z,
        });
        if config.wants(Format::Csv) {
            out.write(&format!("areas_{}.csv", stem(spec)), csv.as_bytes(), Some(meta.clone()))?;
        }
        if config.wants(Format::Json) {
            out.write(&format!("areas_{}.json", stem(spec)), &json_bytes(&rows)?, Some(meta))?;
        }
        diagnostics.push(Diagnostics::new(spec.family(), spec.l(), spec.k(), None));
    }
    if config.wants(Format::Csv) {
        out.write(&format!("escape_rates_l{}.csv", config.l), rates.as_bytes(), None)?;
    }
    if config.wants(Format::Json) {
        out.write(&format!("escape_rates_l{}.json", config.l), &json_bytes(&rate_rows)?, None)?;
    }
    out.finish(config, diagnostics)
}
