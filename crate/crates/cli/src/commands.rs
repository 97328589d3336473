use std::path::{Path, PathBuf};

use harp::evaluation::{odf_maps, tensor_maps_from_sh, OdfMaps};
use harp::harp::{apply_volume, masked_c0, select_training_voxels, train, TrainConfig};
use harp::io::{self, Datatype};
use harp::metrics::{angular_error, wdice, WeightedMap};
use harp::odf::{icosphere, single_fiber_response, CsdOptions, PeakOptions};
use harp::rish::{apply_scale_maps, fit_scale_maps, ScaleMapVolume};
use harp::sh::{fit_sh_volume, reconstruct_dwi, GradientTable, ShFitOptions, ShVolume};
use harp::sim::{simulate_paired_dataset, SimConfig};
use harp::volume::{Mask, ScalarMap};
use log::{info, warn};

use crate::{Cli, CliError, Command, Gradients, OdfArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { config, out } => simulate(config, out, cli.seed),
        Command::FitSh {
            dwi,
            gradients,
            mask,
            out,
            lmax,
            lambda,
            shell,
        } => {
            let dwi = io::read_dwi(dwi)?;
            let gtab = read_table(gradients, Some(dwi.n_volumes()))?;
            let mask = match mask {
                Some(m) => io::read_mask(m)?,
                None => Mask::full(dwi.grid),
            };
            let opts = ShFitOptions {
                lmax: *lmax,
                reg_lambda: *lambda,
                shell: *shell,
            };
            let fit = fit_sh_volume(&dwi, &gtab, &mask, &opts)?;
            if fit.flagged_voxels > 0 {
                warn!(
                    "{} masked voxels had no positive b0 and were set to zero",
                    fit.flagged_voxels
                );
            }
            io::write_sh(out, &fit.sh)?;
            Ok(())
        }
        Command::Recon { sh, gradients, out } => {
            let sh = io::read_sh(sh)?;
            let gtab = read_table(gradients, None)?;
            let dwi = reconstruct_dwi(&sh, &gtab)?;
            io::write_dwi(out, &dwi, Datatype::Float64)?;
            Ok(())
        }
        Command::Train {
            source_sh,
            target_sh,
            mask,
            config,
            reference_sh,
            reference_mask,
            out,
        } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => io::read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let src = io::read_sh(source_sh)?;
            let tgt = io::read_sh(target_sh)?;
            let mask = io::read_mask(mask)?;
            let reference = match reference_mask {
                Some(m) if !reference_sh.is_empty() => {
                    let m = io::read_mask(m)?;
                    let mut c0 = Vec::new();
                    for p in reference_sh {
                        c0.extend(masked_c0(&io::read_sh(p)?, &m));
                    }
                    c0
                }
                _ => masked_c0(&src, &mask),
            };
            let ts =
                select_training_voxels(&src, &tgt, &mask, &reference, cfg.percentile_threshold)?;
            info!("training on {} voxels", ts.len());
            let trained = train(&ts, &cfg)?;
            io::write_model(out, &trained.params, Some(&cfg), &trained.loss_log)?;
            Ok(())
        }
        Command::Apply {
            model,
            sh,
            mask,
            out,
        } => {
            let model = io::read_model(model)?;
            let sh = io::read_sh(sh)?;
            let mask = io::read_mask(mask)?;
            let params = model.to_params()?;
            let harmonized = apply_volume(&params, &sh, &mask)?;
            io::write_sh(out, &harmonized)?;
            Ok(())
        }
        Command::RishFit {
            source_sh,
            target_sh,
            mask,
            out,
            eps,
            s_max,
        } => {
            let src = source_sh
                .iter()
                .map(io::read_sh)
                .collect::<harp::Result<Vec<_>>>()?;
            let tgt = target_sh
                .iter()
                .map(io::read_sh)
                .collect::<harp::Result<Vec<_>>>()?;
            let mask = io::read_mask(mask)?;
            let maps = fit_scale_maps(&src, &tgt, &mask, *eps, *s_max)?;
            io::write_frames(out, &maps.grid, &maps.scales)?;
            Ok(())
        }
        Command::RishApply {
            maps,
            sh,
            mask,
            out,
        } => {
            let (grid, scales) = io::read_frames(maps)?;
            let s_max = scales
                .iter()
                .copied()
                .fold(harp::rish::DEFAULT_SMAX, f64::max);
            let maps = ScaleMapVolume::new(grid, scales, harp::rish::DEFAULT_EPS, s_max)?;
            let sh = io::read_sh(sh)?;
            let mask = io::read_mask(mask)?;
            io::write_sh(out, &apply_scale_maps(&maps, &sh, &mask)?)?;
            Ok(())
        }
        Command::Scalars {
            dwi,
            sh,
            gradients,
            mask,
            fa_out,
            md_out,
            dir_out,
        } => {
            let mask = io::read_mask(mask)?;
            let maps = match (dwi, sh) {
                (Some(d), _) => {
                    let dwi = io::read_dwi(d)?;
                    let gtab = read_table(gradients, Some(dwi.n_volumes()))?;
                    harp::dti::tensor_maps(&dwi, &gtab, &mask)?
                }
                (None, Some(s)) => {
                    let sh = io::read_sh(s)?;
                    let gtab = read_table(gradients, None)?;
                    tensor_maps_from_sh(&sh, &gtab, &mask)?
                }
                (None, None) => {
                    return Err(CliError::Usage("one of --dwi or --sh is required".into()))
                }
            };
            if maps.flagged_voxels > 0 {
                warn!(
                    "{} voxels had negative eigenvalues, FA clamped",
                    maps.flagged_voxels
                );
            }
            io::write_scalar(fa_out, &maps.fa)?;
            io::write_scalar(md_out, &maps.md)?;
            if let Some(p) = dir_out {
                io::write_vectors(p, &maps.principal_dir)?;
            }
            Ok(())
        }
        Command::Gfa {
            sh,
            gradients,
            mask,
            out,
            fodf_out,
            odf,
        } => {
            let maps = compute_odf(sh, gradients, mask, odf, &PeakOptions::default())?;
            io::write_scalar(out, &maps.gfa)?;
            if let Some(p) = fodf_out {
                io::write_sh(p, &maps.fodf)?;
            }
            Ok(())
        }
        Command::Peaks {
            sh,
            gradients,
            mask,
            out,
            rel_threshold,
            min_separation,
            odf,
        } => {
            let peaks = PeakOptions {
                rel_threshold: *rel_threshold,
                min_sep_deg: *min_separation,
            };
            let maps = compute_odf(sh, gradients, mask, odf, &peaks)?;
            io::write_vectors(out, &maps.principal_peak)?;
            Ok(())
        }
        Command::Se { subjects, masks } => {
            let groups: Vec<Vec<PathBuf>> = subjects
                .iter()
                .map(|s| {
                    s.split(',')
                        .filter(|p| !p.is_empty())
                        .map(PathBuf::from)
                        .collect()
                })
                .collect();
            if masks.len() != 1 && masks.len() != groups.len() {
                return Err(CliError::Usage(format!(
                    "--mask given {} times; expected once or once per subject ({})",
                    masks.len(),
                    groups.len()
                )));
            }
            let maps: Vec<Vec<ScalarMap>> = groups
                .iter()
                .map(|g| {
                    g.iter()
                        .map(io::read_scalar)
                        .collect::<harp::Result<Vec<_>>>()
                })
                .collect::<harp::Result<_>>()?;
            let masks: Vec<Mask> = masks
                .iter()
                .map(io::read_mask)
                .collect::<harp::Result<_>>()?;
            let refs: Vec<Vec<&ScalarMap>> = maps.iter().map(|g| g.iter().collect()).collect();
            let mask_refs: Vec<&Mask> = (0..groups.len())
                .map(|i| &masks[i.min(masks.len() - 1)])
                .collect();
            let sigma = harp::evaluation::pooled_standard_error(&refs, &mask_refs)?;
            println!("{sigma}");
            Ok(())
        }
        Command::Wdice {
            a,
            b,
            mask,
            threshold,
        } => {
            let a = io::read_scalar(a)?;
            let b = io::read_scalar(b)?;
            let mask = match mask {
                Some(m) => io::read_mask(m)?,
                None => Mask::full(a.grid),
            };
            let wa = WeightedMap::thresholded(&a, *threshold, &mask)?;
            let wb = WeightedMap::thresholded(&b, *threshold, &mask)?;
            println!("{}", wdice(&wa, &wb)?);
            Ok(())
        }
        Command::Angular { a, b, mask, out } => {
            let a = io::read_vectors(a)?;
            let b = io::read_vectors(b)?;
            let mask = io::read_mask(mask)?;
            let err = angular_error(&a, &b, &mask)?;
            if let Some(p) = out {
                io::write_scalar(p, &err.map)?;
            }
            println!("{}", err.mean_deg);
            Ok(())
        }
        Command::Report {
            spec,
            out,
            json_out,
        } => crate::report::run(spec, out, json_out.as_deref()),
    }
}

fn read_table(g: &Gradients, n_volumes: Option<usize>) -> Result<GradientTable> {
    Ok(match n_volumes {
        Some(n) => io::read_gradients(&g.bval, &g.bvec, n)?,
        None => io::read_gradient_table(&g.bval, &g.bvec)?,
    })
}

fn compute_odf(
    sh: &Path,
    gradients: &Gradients,
    mask: &Path,
    odf: &OdfArgs,
    peaks: &PeakOptions,
) -> Result<OdfMaps> {
    let sh: ShVolume = io::read_sh(sh)?;
    let gtab = read_table(gradients, None)?;
    let mask = io::read_mask(mask)?;
    let dw = gtab.shell_indices(None)?;
    let bvalue = gtab.mean_bvalue(&dw);
    let kernel = single_fiber_response((odf.response[0], odf.response[1]), bvalue)?;
    let sphere = icosphere(odf.sphere_subdivisions)?;
    let opts = CsdOptions {
        lambda: odf.csd_lambda,
        tau: odf.csd_tau,
        ..CsdOptions::default()
    };
    let maps = odf_maps(&sh, &kernel, &sphere, &mask, opts, peaks)?;
    if maps.unconverged_voxels > 0 {
        warn!("CSD did not converge in {} voxels", maps.unconverged_voxels);
    }
    Ok(maps)
}

/// Dataset layout written by `simulate`.
pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: SimConfig = io::read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = simulate_paired_dataset(&cfg)?;
    std::fs::create_dir_all(out).map_err(|e| {
        CliError::Harp(harp::HarpError::Io {
            path: out.to_path_buf(),
            source: e,
        })
    })?;
    io::write_gradients(out.join("dwi.bval"), out.join("dwi.bvec"), &data.gtab)?;
    for (k, (s, t)) in data.source.iter().zip(&data.target).enumerate() {
        io::write_dwi(
            out.join(format!("source_scan{}.nii", k + 1)),
            s,
            Datatype::Float32,
        )?;
        io::write_dwi(
            out.join(format!("target_scan{}.nii", k + 1)),
            t,
            Datatype::Float32,
        )?;
    }
    io::write_mask(out.join("mask.nii"), &data.mask)?;
    let truth = &data.truth;
    io::write_json(out.join("truth.json"), &truth.sidecar())?;
    let grid = data.mask.grid;
    let labels = ScalarMap::new(grid, truth.labels.iter().map(|&l| l as f64).collect())?;
    io::write_scalar(out.join("truth_labels.nii"), &labels)?;
    io::write_scalar(out.join("truth_s0.nii"), &truth.s0)?;
    io::write_vectors(out.join("truth_primary_fiber.nii"), &truth.primary_fiber)?;
    io::write_vectors(
        out.join("truth_secondary_fiber.nii"),
        &truth.secondary_fiber,
    )?;
    let tensors =
        ndarray::Array2::from_shape_fn((grid.n_voxels(), 6), |(v, c)| truth.mean_tensor[v][c]);
    io::write_frames(out.join("truth_tensor.nii"), &grid, &tensors)?;
    if let Some(g) = &truth.gain {
        io::write_scalar(out.join("truth_gain.nii"), g)?;
    }
    Ok(())
}
