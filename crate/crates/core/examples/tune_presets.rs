//! Grid search over the post-reconstruction parameters on synthetic cells.
//!
//! Reconstructions are computed once per image; every grid point then only
//! reruns thresholding, cleaning, clustering and tracing.
//!
//! ```text
//! cargo run --release -p elseg-core --example tune_presets -- desk.model \
//!     [top=15] [window=7,11] [sigma=<window/6>] [block=7,11,15,21] [c=0,5,10,20] \
//!     [floor=0.1,0.2,0.3] [eps=1.5,2,3] [min_pts=4,8,15] [mode=union,intersection] [border=0.02] [data=8101]
//! ```

use std::collections::BTreeMap;

use elseg_core::annotate::AnnotationRecord;
use elseg_core::autoenc::{load_model, Tensor};
use elseg_core::cluster::DbscanParams;
use elseg_core::config::PipelineConfig;
use elseg_core::evaluate::{evaluate, EvaluationReport};
use elseg_core::imagecore::{prepare, BinaryMask, Image};
use elseg_core::pipeline::extract_defects;
use elseg_core::segment::{disparity_intensity, CombineMode, ThresholdConfig};
use elseg_core::ssim::{ssim_map, SsimParams};
use elseg_core::synthcell::{generate_dataset_with, CellSpec, DefectKind};
use rayon::prelude::*;

struct Sample {
    id: String,
    prepared: Image,
    truth: BinaryMask,
    /// Disparity intensity per SSIM window size.
    intensity: BTreeMap<usize, Image>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let model = load_model(args.next().unwrap_or_else(|| "desk.model".into()))?;
    let opts: BTreeMap<String, String> = args
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_owned(), v.to_owned())))
        .collect();
    let list = |key: &str, default: &str| -> Vec<f64> {
        opts.get(key)
            .map(String::as_str)
            .unwrap_or(default)
            .split(',')
            .map(|v| v.parse().unwrap_or_else(|_| panic!("{key}: bad number {v:?}")))
            .collect()
    };
    let top = list("top", "15")[0] as usize;
    let windows: Vec<usize> = list("window", "7,11").into_iter().map(|v| v as usize).collect();
    let border = list("border", "0.02")[0];
    let sigma = opts.get("sigma").map(|v| v.parse::<f64>()).transpose()?;
    let blocks = list("block", "7,11,15,21");
    let cs = list("c", "0,5,10,20");
    let floors = list("floor", "0.1,0.2,0.3");
    let epsilons = list("eps", "1.5,2,3");
    let min_ptss = list("min_pts", "4,8,15");
    let modes: Vec<CombineMode> = opts
        .get("mode")
        .map(String::as_str)
        .unwrap_or("union,intersection")
        .split(',')
        .map(|m| if m == "union" { CombineMode::Union } else { CombineMode::Intersection })
        .collect();
    let spec = CellSpec::desk(0);
    let kinds = [DefectKind::Crack, DefectKind::DeadPatch];
    let data_seed = list("data", "8101")[0] as u64;
    let mut cells = generate_dataset_with(50, 1.0, &spec, data_seed, &kinds)?;
    cells.extend(generate_dataset_with(50, 0.0, &spec, data_seed + 101, &kinds)?);

    let samples: Vec<Sample> = cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let prepared = prepare(&c.image, 64, 64).unwrap();
            let recon = model.forward(&Tensor::from_image(&prepared)).unwrap().to_image();
            let intensity = windows
                .iter()
                .map(|&w| {
                    let p = SsimParams { window_size: w, gaussian_sigma: sigma.unwrap_or(w as f64 / 6.0), ..SsimParams::disparity_preset(1.0) };
                    (w, disparity_intensity(&ssim_map(&prepared, &recon, &p).unwrap()))
                })
                .collect();
            Sample { id: format!("s{i:03}"), prepared, truth: c.mask.clone(), intensity }
        })
        .collect();
    let truth: BTreeMap<String, BinaryMask> = samples.iter().map(|s| (s.id.clone(), s.truth.clone())).collect();

    let mut grid = Vec::new();
    for &window in &windows {
        for &block in &blocks {
            for &c in &cs {
                for &floor in &floors {
                    for &eps in &epsilons {
                        for &min_pts in &min_ptss {
                            for &mode in &modes {
                                let mut cfg = PipelineConfig::desk();
                                let (block, min_pts) = (block as usize, min_pts as usize);
                                cfg.threshold = ThresholdConfig { adaptive_block: block, adaptive_c: c, combine_mode: mode };
                                cfg.min_disparity = floor;
                                cfg.busbars.border_fraction = border;
                                cfg.dbscan = DbscanParams { epsilon: eps, min_pts };
                                grid.push((window, cfg));
                            }
                        }
                    }
                }
            }
        }
    }
    println!("{} grid points over {} images", grid.len(), samples.len());
    let started = std::time::Instant::now();

    let mut scored: Vec<(f64, usize, EvaluationReport)> = grid
        .par_iter()
        .enumerate()
        .map(|(k, (window, cfg))| {
            let records: Vec<AnnotationRecord> = samples
                .iter()
                .map(|s| {
                    let e = extract_defects(cfg, &s.prepared, &s.intensity[window], (64, 64)).unwrap();
                    AnnotationRecord::silver(&s.id, "", 64, 64, e.polygons, e.degenerate, chrono::DateTime::UNIX_EPOCH)
                })
                .collect();
            let r = evaluate(&records, &truth).unwrap();
            let score = (r.mean_iou_defective.unwrap_or(0.0) - 0.5)
                .min(r.recall - 0.8)
                .min(r.clean_rate() - 0.9);
            (score, k, r)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("searched in {:.1}s", started.elapsed().as_secs_f64());
    for (score, k, r) in scored.iter().take(top) {
        let (window, cfg) = &grid[*k];
        println!(
            "margin {score:+.3}  win {window:>2} block {:>2} C {:>4} floor {:.2} eps {:.1} minPts {:>2} {:?}  iou {:.3} recall {:.3} precision {:.3} clean {:.2}",
            cfg.threshold.adaptive_block,
            cfg.threshold.adaptive_c,
            cfg.min_disparity,
            cfg.dbscan.epsilon,
            cfg.dbscan.min_pts,
            cfg.threshold.combine_mode,
            r.mean_iou_defective.unwrap_or(0.0),
            r.recall,
            r.precision,
            r.clean_rate()
        );
    }
    Ok(())
}
