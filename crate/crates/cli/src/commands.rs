use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use gsc_core::bench::{bench_aggregation, BenchGrid};
use gsc_core::densify::{split_marked, SplitConfig, SplitMode};
use gsc_core::io::{
    read_cameras, read_image, read_ply, read_scores, sidecar_path, synth_scene, write_cameras, write_image,
    write_ply, write_scores, Camera, ImageBuffer, SynthParams,
};
use gsc_core::ranking::{budgeted_prune, rank_cloud, PruneFilters, RankingConfig};
use gsc_core::render::metrics::{psnr, ssim};
use gsc_core::render::render;
use gsc_core::transport::{aggregate_cloud, OpacityMerge, TargetInit, TransportConfig};
use gsc_core::GaussianCloud;

use crate::args::*;
use crate::error::{CliError, CliResult};

pub fn gt_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("view_{view:03}.png"))
}

fn require(path: &Path, what: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn parse_resolution(text: &str) -> CliResult<(u32, u32)> {
    let bad = || CliError::Usage(format!("resolution must be WxH or a single side, got {text:?}"));
    let (w, h) = match text.split_once(['x', 'X']) {
        Some((w, h)) => (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?),
        None => {
            let s = text.trim().parse().map_err(|_| bad())?;
            (s, s)
        }
    };
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn load_views(v: &ViewArgs) -> CliResult<(GaussianCloud, Vec<Camera>)> {
    require(&v.input, "input cloud")?;
    require(&v.cameras, "camera file")?;
    let cloud = read_ply(&v.input)?;
    let mut cameras = read_cameras(&v.cameras)?;
    if let Some(r) = &v.resolution {
        let (w, h) = parse_resolution(r)?;
        cameras = cameras.iter().map(|c| c.with_resolution(w, h)).collect();
    }
    Ok((cloud, cameras))
}

fn load_gt(dir: &Path, n: usize) -> CliResult<Vec<ImageBuffer>> {
    require(dir, "ground-truth directory")?;
    (0..n)
        .map(|i| {
            let p = gt_path(dir, i);
            require(&p, "ground-truth image")?;
            Ok(read_image(&p)?)
        })
        .collect()
}

fn load_scored(input: &Path, scores: Option<&PathBuf>, required: bool) -> CliResult<GaussianCloud> {
    require(input, "input cloud")?;
    let mut cloud = read_ply(input)?;
    let path = scores.cloned().unwrap_or_else(|| sidecar_path(input));
    if path.exists() {
        cloud.scores = read_scores(&path, cloud.len())?;
    } else if required || scores.is_some() {
        return Err(CliError::Missing {
            what: "score sidecar",
            path,
        });
    }
    Ok(cloud)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn render_all(cloud: &GaussianCloud, cameras: &[Camera], dir: &Path) -> CliResult<()> {
    create_dir(dir)?;
    for (i, cam) in cameras.iter().enumerate() {
        write_image(&render(cloud, cam)?, gt_path(dir, i))?;
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let params = SynthParams {
        resolution: a.resolution,
        ..SynthParams::new(a.seed, a.n, a.dup, a.n_cameras)
    };
    let (cloud, cameras) = synth_scene(&params)?;
    write_ply(&cloud, &a.output)?;
    if let Some(p) = &a.cameras {
        write_cameras(&cameras, p)?;
    }
    if let Some(dir) = &a.gt_dir {
        render_all(&cloud, &cameras, dir)?;
    }
    println!("synth: {} splats, {} cameras", cloud.len(), cameras.len());
    Ok(())
}

/// Counts per bucket `[edges[i], edges[i+1])`, last bucket open.
fn histogram(values: impl Iterator<Item = f64>, edges: &[f64]) -> Vec<usize> {
    let mut h = vec![0; edges.len()];
    for v in values {
        if let Some(b) = edges.iter().rposition(|e| v >= *e) {
            h[b] += 1;
        }
    }
    h
}

fn bucket_labels(edges: &[f64]) -> Vec<String> {
    edges
        .iter()
        .enumerate()
        .map(|(i, lo)| match edges.get(i + 1) {
            Some(hi) => format!("[{lo}, {hi})"),
            None => format!(">= {lo}"),
        })
        .collect()
}

fn print_histogram(name: &str, edges: &[f64], counts: &[usize]) {
    println!("{name}:");
    for (label, c) in bucket_labels(edges).iter().zip(counts) {
        println!("  {label:>14}  {c}");
    }
}

pub fn rank(a: &RankArgs) -> CliResult<()> {
    let (mut cloud, cameras) = load_views(&a.view)?;
    let gt = load_gt(&a.gt_dir, cameras.len())?;
    let cfg = RankingConfig {
        tau1: a.tau1,
        tau2: a.tau2,
        eps_v: a.eps_v,
        view_stride: a.view_stride,
        ..Default::default()
    };
    let d = rank_cloud(&mut cloud, &cameras, &gt, &cfg)?;
    let out = a.output.clone().unwrap_or_else(|| sidecar_path(&a.view.input));
    write_scores(&out, &cloud.scores, cloud.len())?;

    println!("{:>6} {:>10} {:>12}", "view", "loss", "mask");
    for v in &d.views {
        println!("{:>6} {:>10.5} {:>12.6}", v.camera_index, v.loss, v.mask_density);
    }
    let count_edges = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0];
    let sd_edges = [0.0, 1.0, 2.0, 3.0];
    let sp_edges: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let s = &cloud.scores;
    let c_hist = histogram(d.counts.iter().map(|&c| c as f64), &count_edges);
    let sd_hist = histogram(s.densify.iter().flatten().map(|&c| c as f64), &sd_edges);
    let sp_hist = histogram(s.prune.iter().flatten().copied(), &sp_edges);
    print_histogram("deficiency C", &count_edges, &c_hist);
    print_histogram("densification S_d", &sd_edges, &sd_hist);
    print_histogram("pruning S_p", &sp_edges, &sp_hist);
    let marked = s.densify.iter().flatten().filter(|&&v| v >= 1).count();
    println!("{} splats, {} views, {marked} marked for splitting", cloud.len(), d.n_views());

    if let Some(path) = &a.report {
        let views: Vec<Value> = d
            .views
            .iter()
            .map(|v| json!({"view": v.camera_index, "loss": v.loss, "mask_density": v.mask_density}))
            .collect();
        let hist = |edges: &[f64], counts: &[usize]| json!({"buckets": bucket_labels(edges), "counts": counts});
        write_json(
            path,
            &json!({
                "n_splats": cloud.len(),
                "n_views": d.n_views(),
                "marked": marked,
                "views": views,
                "histograms": {
                    "deficiency": hist(&count_edges, &c_hist),
                    "densify": hist(&sd_edges, &sd_hist),
                    "prune": hist(&sp_edges, &sp_hist),
                },
            }),
        )?;
    }
    Ok(())
}

pub fn prune(a: &PruneArgs) -> CliResult<()> {
    let cloud = load_scored(&a.input, a.scores.as_ref(), true)?;
    let s_p = cloud
        .scores
        .prune
        .clone()
        .ok_or_else(|| CliError::Usage("score sidecar has no pruning channel; run `gsc rank` first".into()))?;
    let filters = PruneFilters {
        min_opacity: a.min_opacity,
        max_world_scale: a.max_world_scale,
    };
    let out = budgeted_prune(&cloud, &s_p, a.budget, a.seed, &filters, RankingConfig::default().eps_prune)?;
    write_ply(&out.cloud, &a.output)?;
    write_scores(sidecar_path(&a.output), &out.cloud.scores, out.cloud.len())?;
    println!(
        "prune: removed {} of {} ({} candidates{}), {} remain",
        out.removed.len(),
        cloud.len(),
        out.candidates,
        if out.clamped { ", budget clamped" } else { "" },
        out.cloud.len()
    );
    Ok(())
}

pub fn compact(a: &CompactArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = TransportConfig {
        sample_ratio: a.ratio,
        kd_depth: a.kd_depth,
        em_iters: a.em_iters,
        init: match a.init {
            InitArg::TopWeight => TargetInit::TopWeight,
            InitArg::FarthestPoint => TargetInit::FarthestPoint,
        },
        opacity: match a.opacity {
            OpacityArg::WeightedMean => OpacityMerge::WeightedMean,
            OpacityArg::Coverage => OpacityMerge::Coverage,
        },
        ..Default::default()
    };
    cfg.validate()?;
    let cloud = load_scored(&a.input, a.scores.as_ref(), false)?;
    let read_ms = start.elapsed().as_secs_f64() * 1e3;
    let weighted = cloud.scores.deficiency.is_some();
    if !weighted {
        log::info!("no deficiency channel; every splat weighs its opacity");
    }
    let agg = aggregate_cloud(&cloud, &cfg)?;
    let write_start = Instant::now();
    write_ply(&agg.cloud, &a.output)?;
    let write_ms = write_start.elapsed().as_secs_f64() * 1e3;

    let t = agg.timings;
    let report = json!({
        "n_before": cloud.len(),
        "n_after": agg.cloud.len(),
        "config": {
            "ratio": a.ratio,
            "kd_depth": a.kd_depth,
            "em_iters": a.em_iters,
            "init": format!("{:?}", cfg.init),
            "opacity": format!("{:?}", cfg.opacity),
            "weighted_by_deficiency": weighted,
        },
        "n_blocks": agg.blocks.len(),
        "blocks": agg.blocks,
        "timings_ms": t,
        "io_ms": {"read": read_ms, "write": write_ms},
    });
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.output.with_extension("report.json"));
    write_json(&report_path, &report)?;

    println!("compact: {} → {} splats in {} blocks", cloud.len(), agg.cloud.len(), agg.blocks.len());
    println!(
        "  tree {:.1} ms, cost {:.1} ms, em {:.1} ms, assemble {:.1} ms, total {:.1} ms",
        t.tree_ms, t.cost_ms, t.em_ms, t.assemble_ms, t.total_ms
    );
    Ok(())
}

pub fn split(a: &SplitArgs) -> CliResult<()> {
    let cloud = load_scored(&a.input, a.scores.as_ref(), true)?;
    let cfg = SplitConfig {
        eta: a.eta,
        mode: if a.strict { SplitMode::Strict } else { SplitMode::Contractive },
    };
    let out = split_marked(&cloud, &cfg)?;
    write_ply(&out, &a.output)?;
    println!("split: {} → {} splats", cloud.len(), out.len());
    Ok(())
}

pub fn render_cmd(a: &RenderArgs) -> CliResult<()> {
    let (cloud, cameras) = load_views(&a.view)?;
    render_all(&cloud, &cameras, &a.output)?;
    println!("render: {} views to {}", cameras.len(), a.output.display());
    Ok(())
}

/// Finite numbers stay numbers; infinity becomes the string `"inf"`.
fn db(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let (cloud, cameras) = load_views(&a.view)?;
    let gt = load_gt(&a.gt_dir, cameras.len())?;
    let mut rows = Vec::new();
    println!("{:>6} {:>10} {:>8}", "view", "psnr", "ssim");
    for (i, (cam, g)) in cameras.iter().zip(&gt).enumerate() {
        // Compare at 8-bit precision, the same as the stored ground truth.
        let img = ImageBuffer::from_bytes(cam.width as usize, cam.height as usize, 3, &render(&cloud, cam)?.to_bytes())?;
        let p = psnr(&img, g)?;
        let s = ssim(&img, g)?;
        println!("{i:>6} {p:>10.3} {s:>8.4}");
        rows.push((p, s));
    }
    let n = rows.len().max(1) as f64;
    let mean_psnr = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let mean_ssim = rows.iter().map(|r| r.1).sum::<f64>() / n;
    println!("{:>6} {mean_psnr:>10.3} {mean_ssim:>8.4}", "mean");
    if let Some(path) = &a.report {
        let views: Vec<Value> = rows
            .iter()
            .enumerate()
            .map(|(i, (p, s))| json!({"view": i, "psnr": db(*p), "ssim": s}))
            .collect();
        write_json(
            path,
            &json!({"views": views, "mean_psnr": db(mean_psnr), "mean_ssim": mean_ssim}),
        )?;
    }
    Ok(())
}

pub fn bench(a: &BenchArgs, threads: usize) -> CliResult<()> {
    let grid = BenchGrid {
        ns: a.ns.clone(),
        depths: a.depths.clone(),
        ratio: a.ratio,
    };
    let report = bench_aggregation(&grid, a.seed, a.repeats, threads)?;
    println!(
        "{:>9} {:>4} {:>10} {:>10} {:>10} {:>10} {:>9}",
        "N", "D", "tree ms", "cost ms", "em ms", "total ms", "outputs"
    );
    for c in &report.cells {
        println!(
            "{:>9} {:>4} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>9}",
            c.n, c.depth, c.tree_ms, c.cost_ms, c.em_ms, c.total_ms, c.output_count
        );
    }
    for g in &report.growth {
        println!(
            "D={} N {}→{}: tree ×{:.2}, total ×{:.2}",
            g.depth, g.n_from, g.n_to, g.tree_ratio, g.total_ratio
        );
    }
    if let Some(path) = &a.output {
        write_json(path, &report)?;
    }
    Ok(())
}
