//! The render, profile, partition and sweep commands.

use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use nerfsim_core::field::{synth_feature_maps, NeuralField, RadianceField};
use nerfsim_core::perfmodel::{count_flops, FlopsReport};
use nerfsim_core::pipeline::{pixel_rays, render_coarse_then_focus, render_reference};
use nerfsim_core::profile::{profile_frame, Dataflow, FrameWorkload, ProfileReport};
use nerfsim_core::scheduler::{
    check_partition, fixed_slicing_partition, greedy_partition, read_jsonl, write_jsonl, PointPatch, WorkloadCube,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{resolve, Evaluator, Experiment};
use crate::output::{write_atomic, write_json, write_summary, SummaryRow};
use crate::CliError;

fn with_field<T>(exp: &Experiment, run: impl FnOnce(&dyn RadianceField) -> Result<T, CliError>) -> Result<T, CliError> {
    let c = &exp.config;
    match c.evaluator {
        Evaluator::Analytic => run(&exp.scene),
        Evaluator::Neural => {
            let f = &c.features;
            let maps = synth_feature_maps(&exp.scene, &exp.sources, f.height, f.width, f.channels, c.depth_range, c.seed)?;
            let field = NeuralField::new(
                &c.network,
                maps,
                exp.sources.clone(),
                &exp.novel,
                c.sampling.coarse_views,
                exp.scene.background(),
            )?;
            run(&field)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub config_hash: String,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub mean_focused_points: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_abs_error_vs_reference: Option<f64>,
}

/// Writes `render.ppm`, `render.f32`, `flops.json`, `render.json`, and with
/// `reference_points` set, `reference.f32`.
pub fn cmd_render(exp: &Experiment) -> Result<RenderSummary, CliError> {
    let c = &exp.config;
    let out = &c.output_dir;
    let (h, w) = (exp.novel.image_height as usize, exp.novel.image_width as usize);
    let rays = pixel_rays(&exp.novel, c.depth_range.0, c.depth_range.1)?;
    let ctf = with_field(exp, |field| Ok(render_coarse_then_focus(&rays, h, w, field, &c.sampling, c.seed)?))?;
    let image = ctf.image;
    write_atomic(&out.join("render.ppm"), |w| image.write_ppm(w).map_err(std::io::Error::other))?;
    write_atomic(&out.join("render.f32"), |w| image.write_float_dump(w).map_err(std::io::Error::other))?;
    let flops: FlopsReport = count_flops(&c.network, &c.sampling, exp.sources.len(), (h * w) as u64);
    write_json(&out.join("flops.json"), &flops)?;
    let mut error = None;
    if let Some(n) = c.reference_points {
        let reference = render_reference(&exp.scene, &rays, h, w, n)?;
        write_atomic(&out.join("reference.f32"), |w| reference.write_float_dump(w).map_err(std::io::Error::other))?;
        error = Some(image.mean_abs_error(&reference)?);
    }
    let summary = RenderSummary {
        config_hash: exp.config_hash(),
        seed: c.seed,
        height: h,
        width: w,
        mean_focused_points: image.counts.iter().map(|&n| n as f64).sum::<f64>() / image.counts.len().max(1) as f64,
        mean_abs_error_vs_reference: error,
    };
    write_json(&out.join("render.json"), &summary)?;
    Ok(summary)
}

/// Scheduler and pipeline model over both stages, one report per dataflow.
pub fn profile_experiment(exp: &Experiment, dataflows: &[Dataflow]) -> Result<Vec<ProfileReport>, CliError> {
    let c = &exp.config;
    let work = with_field(exp, |field| {
        Ok(FrameWorkload::build(
            &exp.novel,
            &exp.sources,
            c.depth_range,
            c.features,
            c.scheduler.focused_bins,
            field,
            &c.sampling,
            c.seed,
        )?)
    })?;
    dataflows
        .iter()
        .map(|&df| Ok(profile_frame(&work, &c.network, &c.sampling, &c.scheduler.candidates, &c.hardware, df)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub config_hash: String,
    pub seed: u64,
    pub views: usize,
    pub runs: Vec<ProfileReport>,
}

/// Writes `trace.json` and `summary.csv` into the output directory.
pub fn cmd_profile(exp: &Experiment, dataflows: &[Dataflow]) -> Result<Vec<SummaryRow>, CliError> {
    let runs = profile_experiment(exp, dataflows)?;
    let hash = exp.config_hash();
    let views = exp.sources.len();
    let rows: Vec<SummaryRow> = runs.iter().map(|r| SummaryRow::new(&hash, views, exp.config.seed, r)).collect();
    let out = &exp.config.output_dir;
    write_json(&out.join("trace.json"), &TraceFile { config_hash: hash, seed: exp.config.seed, views, runs })?;
    write_summary(&out.join("summary.csv"), &rows)?;
    Ok(rows)
}

/// Profiles one copy of the experiment per view count in parallel. Each run
/// writes into `s<views>/`; the combined table goes to `summary.csv`.
pub fn cmd_sweep(exp: &Experiment, views: &[usize], dataflows: &[Dataflow]) -> Result<Vec<SummaryRow>, CliError> {
    let base = &exp.config.output_dir;
    let runs: Vec<Vec<SummaryRow>> = views
        .par_iter()
        .map(|&s| {
            let mut cfg = exp.config.with_views(s).map_err(CliError::Usage)?;
            cfg.output_dir = base.join(format!("s{s}"));
            let run = resolve(cfg, exp.scene.clone(), "", Path::new("<sweep>"))?;
            cmd_profile(&run, dataflows)
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<SummaryRow> = runs.into_iter().flatten().collect();
    write_summary(&base.join("summary.csv"), &rows)?;
    Ok(rows)
}

pub fn focused_cube(exp: &Experiment) -> Result<WorkloadCube, CliError> {
    let c = &exp.config;
    Ok(WorkloadCube::new(exp.novel.clone(), c.scheduler.focused_bins, c.depth_range, exp.sources.clone(), c.features)?)
}

/// Partition of the focused cube, re-checked, written to `patches.jsonl`.
/// `gen` uses the greedy scheduler, the variants fixed slicing.
pub fn cmd_partition(exp: &Experiment, dataflow: Dataflow) -> Result<Vec<PointPatch>, CliError> {
    let cube = focused_cube(exp)?;
    let capacity = exp.config.hardware.prefetch.capacity_bytes;
    let patches = match dataflow {
        Dataflow::Gen => greedy_partition(&cube, &exp.config.scheduler.candidates, capacity)?,
        _ => fixed_slicing_partition(&cube, capacity)?,
    };
    check_partition(&cube, &patches, capacity)?;
    write_atomic(&exp.config.output_dir.join("patches.jsonl"), |w| write_jsonl(&patches, w).map_err(std::io::Error::other))?;
    Ok(patches)
}

pub fn read_patches(path: &Path) -> Result<Vec<PointPatch>, CliError> {
    Ok(read_jsonl(BufReader::new(fs::File::open(path)?))?)
}

/// Prints rows as a JSON array or CSV.
pub fn print_rows(rows: &[SummaryRow], format: crate::Format, mut w: impl Write) -> std::io::Result<()> {
    match format {
        crate::Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)
        }
        crate::Format::Csv => crate::output::write_csv_rows(rows, w),
    }
}
