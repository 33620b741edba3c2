use std::path::{Path, PathBuf};

use nlswag::baselines::boxcar;
use nlswag::eval::{
    fractal_experiment, slope_sweep, step_response, ExperimentReport, FractalConfig, Method, SlopeConfig, StepConfig,
    StepVariant,
};
use nlswag::filter::{build_table, nlswag, stage1_filter};
use nlswag::io::{read_complex, read_real, write_raster, Raster};
use nlswag::raster::{EstimateBundle, GridShape, SlcPair};
use nlswag::render::{render_raster, Stretch};
use nlswag::simulate::{
    make_fractal, make_ramp, make_step, sample_slc_pair, FractalSpec, SceneSpec, SimSeed, StepSpec,
};

use crate::config::{parse_xi, MethodName, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{CalibrateArgs, EvalCmd, EvalCommon, FilterArgs, GridArgs, ParamArgs, SceneCmd, Variant};

const PAPER_SCALE_TRIALS: usize = 10_000;

fn resolve(config: Option<&Path>, flags: &ParamArgs) -> CliResult<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let p = &mut cfg.params;
    if let Some(v) = flags.search_half {
        p.search_half = v;
    }
    if let Some(v) = flags.patch_half_stage1 {
        p.patch_half_stage1 = v;
    }
    if let Some(v) = flags.patch_half_stage2 {
        p.patch_half_stage2 = v;
    }
    if let Some(v) = flags.h1 {
        p.h1 = v;
    }
    if let Some(v) = flags.h2 {
        p.h2 = v;
    }
    if let Some(v) = flags.fringe_block {
        p.fringe_block = v;
    }
    if let Some(v) = flags.fringe_fft {
        p.fringe_fft = v;
    }
    if let Some(v) = flags.sigma_smooth {
        p.sigma_smooth = v;
    }
    if let Some(v) = &flags.xi {
        p.xi_coeffs = if v == "auto" { None } else { Some(parse_xi(v)?) };
    }
    if flags.no_fringe_refine {
        p.fringe_refine = false;
    }
    if flags.no_fringe_compensation {
        p.fringe_compensation = false;
    }
    Ok(cfg)
}

fn write(out: &Path, name: &str, raster: impl Into<Raster>) -> CliResult<PathBuf> {
    let path = out.join(name);
    write_raster(&raster.into(), &path)?;
    Ok(path)
}

fn grid(g: &GridArgs) -> CliResult<GridShape> {
    Ok(GridShape::new(g.size, g.cols.unwrap_or(g.size))?)
}

fn write_scene(out: &Path, scene: &SceneSpec) -> CliResult<()> {
    write(out, "scene_phase", scene.true_phase.clone())?;
    write(out, "scene_amplitude", scene.amplitude.clone())?;
    write(out, "scene_coherence", scene.coherence.clone())?;
    Ok(())
}

fn write_pair(out: &Path, pair: &SlcPair) -> CliResult<()> {
    write(out, "master", pair.master().clone())?;
    write(out, "slave", pair.slave().clone())?;
    Ok(())
}

pub fn simulate(out: &Path, cmd: SceneCmd) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let (scene, noise_seed, scene_only) = match cmd {
        SceneCmd::Ramp { grid: g, f_range, f_azimuth, coherence, seed, scene_only } => {
            (make_ramp(grid(&g)?, f_range, f_azimuth, coherence)?, SimSeed(seed), scene_only)
        }
        SceneCmd::Step { grid: g, variant, seed, scene_only } => {
            let spec = match variant {
                Variant::Plain => StepSpec::default(),
                Variant::IntensityCoherence => StepSpec::intensity_coherence(),
            };
            (make_step(grid(&g)?, &spec)?, SimSeed(seed), scene_only)
        }
        SceneCmd::Fractal { grid: g, coherence, phase_span, seed, scene_only } => {
            let shape = grid(&g)?;
            let side = shape.rows.max(shape.cols).max(2);
            let spec = FractalSpec {
                levels: usize::BITS - (side - 1).leading_zeros(),
                coherence,
                phase_span: phase_span.or(FractalSpec::default().phase_span),
                ..FractalSpec::default()
            };
            let seed = SimSeed(seed);
            (make_fractal(shape, &spec, seed.derive(0))?, seed.derive(1), scene_only)
        }
        SceneCmd::Sample { scene, seed } => {
            let spec = SceneSpec::new(
                read_real(scene.join("scene_amplitude"), true)?,
                read_real(scene.join("scene_coherence"), true)?,
                read_real(scene.join("scene_phase"), true)?,
            )?;
            return write_pair(out, &sample_slc_pair(&spec, SimSeed(seed))?);
        }
    };
    write_scene(out, &scene)?;
    if !scene_only {
        write_pair(out, &sample_slc_pair(&scene, noise_seed)?)?;
    }
    Ok(())
}

fn write_bundle(out: &Path, b: &EstimateBundle, render: bool) -> CliResult<()> {
    for (name, r) in [("phase", &b.phase), ("intensity", &b.intensity), ("coherence", &b.coherence), ("enl", &b.enl)] {
        write(out, name, r.clone())?;
        if render {
            render_raster(r, out.join(format!("{name}.pgm")), Stretch::for_semantic(r.semantic()))?;
        }
    }
    Ok(())
}

pub fn filter(out: &Path, args: FilterArgs) -> CliResult<()> {
    let mut cfg = resolve(args.config.as_deref(), &args.params)?;
    if let Some(m) = &args.method {
        cfg.method = MethodName::parse(m)?;
    }
    if let Some(k) = args.k {
        if cfg.method != MethodName::Boxcar {
            return Err(CliError::config("--k only applies to --method boxcar"));
        }
        cfg.k = k;
    }
    if let Some(i) = &args.input {
        cfg.input = Some(i.clone());
    }
    cfg.validate()?;
    if cfg.method == MethodName::Boxcar && (args.dump_eta || args.dump_enl) {
        return Err(CliError::config("--dump-eta and --dump-enl need method stage1 or nlswag"));
    }
    if cfg.method != MethodName::Nlswag && args.dump_fringe {
        return Err(CliError::config("--dump-fringe needs method nlswag"));
    }
    let input = cfg.input.clone().ok_or_else(|| CliError::config("no input: pass --input or set `input`"))?;
    let pair = SlcPair::new(read_complex(input.join("master"))?, read_complex(input.join("slave"))?)?;
    std::fs::create_dir_all(out)?;
    match cfg.method {
        MethodName::Boxcar => write_bundle(out, &boxcar(&pair, cfg.k)?, args.render)?,
        MethodName::Stage1 => {
            let s1 = stage1_filter(&pair, &cfg.params)?;
            write_bundle(out, &s1.guidance, args.render)?;
            if args.dump_eta {
                write(out, "eta", s1.heterogeneity.eta)?;
            }
            if args.dump_enl {
                write(out, "enl_stage1", s1.guidance.enl)?;
            }
        }
        MethodName::Nlswag => {
            let res = nlswag(&pair, &cfg.params)?;
            write_bundle(out, &res.estimate, args.render)?;
            if args.dump_eta {
                write(out, "eta", res.heterogeneity.eta)?;
            }
            if args.dump_enl {
                write(out, "enl_stage1", res.stage1.enl)?;
            }
            if args.dump_fringe {
                write(out, "fringe_range", res.fringe.f_range)?;
                write(out, "fringe_azimuth", res.fringe.f_azimuth)?;
            }
            log::info!("xi coefficients {:?}", res.xi.coeffs());
        }
    }
    Ok(())
}

pub fn calibrate(out: &Path, args: CalibrateArgs) -> CliResult<()> {
    let cfg = resolve(args.config.as_deref(), &args.params)?;
    cfg.validate()?;
    let table = build_table(SimSeed(args.seed), &cfg.params)?;
    let path = args.output.unwrap_or_else(|| out.join("xi_calibration.txt"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, table.to_text())?;
    Ok(())
}

fn methods(list: Option<&str>, default: &[Method], k: usize) -> CliResult<Vec<Method>> {
    let Some(list) = list else {
        return Ok(default.iter().map(|m| if let Method::Boxcar(_) = m { Method::Boxcar(k) } else { *m }).collect());
    };
    list.split(',')
        .map(|m| match m.trim() {
            "boxcar" => Ok(Method::Boxcar(k)),
            "stage1" => Ok(Method::Stage1),
            "nlswag" => Ok(Method::Nlswag),
            "nlswag_nocomp" => Ok(Method::NlswagFlat),
            other => Err(CliError::config(format!("unknown method `{other}`"))),
        })
        .collect()
}

struct EvalSetup {
    cfg: RunConfig,
    trials: Option<usize>,
    seed: SimSeed,
}

fn eval_setup(c: &EvalCommon) -> CliResult<EvalSetup> {
    let mut cfg = resolve(c.config.as_deref(), &c.params)?;
    if let Some(k) = c.k {
        cfg.k = k;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let trials = if c.paper_scale { Some(PAPER_SCALE_TRIALS) } else { c.trials.or(cfg.trials) };
    cfg.trials = trials;
    cfg.validate()?;
    Ok(EvalSetup { seed: SimSeed(cfg.seed), cfg, trials })
}

fn finish_report(out: &Path, mut report: ExperimentReport) -> CliResult<()> {
    let path = out.join(format!("{}.csv", report.id));
    report.write_csv(&path)?;
    report.files.push(path);
    for f in &report.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

pub fn eval(out: &Path, cmd: EvalCmd) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    match cmd {
        EvalCmd::Slope { common, frequencies, size, coherence } => {
            let s = eval_setup(&common)?;
            let mut cfg = SlopeConfig {
                coherence,
                rows: size,
                cols: size,
                seed: s.seed,
                params: s.cfg.params.clone(),
                ..SlopeConfig::default()
            };
            cfg.methods = methods(common.methods.as_deref(), &cfg.methods, s.cfg.k)?;
            if let Some(t) = s.trials {
                cfg.trials = t;
            }
            if let Some(f) = frequencies {
                cfg.frequencies = f
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| CliError::config(format!("bad frequency `{v}`"))))
                    .collect::<CliResult<_>>()?;
            }
            finish_report(out, slope_sweep(&cfg)?.report)
        }
        EvalCmd::Step { common, variant, rows, cols } => {
            let s = eval_setup(&common)?;
            let mut cfg = StepConfig {
                variant: match variant {
                    Variant::Plain => StepVariant::Plain,
                    Variant::IntensityCoherence => StepVariant::IntensityCoherence,
                },
                rows,
                cols,
                seed: s.seed,
                params: s.cfg.params.clone(),
                ..StepConfig::default()
            };
            cfg.methods = methods(common.methods.as_deref(), &cfg.methods, s.cfg.k)?;
            if let Some(t) = s.trials {
                cfg.trials = t;
            }
            let res = step_response(&cfg)?;
            let profiles = out.join("step_profiles.csv");
            res.write_profiles(&profiles)?;
            let mut report = res.report;
            report.files.push(profiles);
            finish_report(out, report)
        }
        EvalCmd::Fractal { common, size, coherence, phase_span } => {
            let s = eval_setup(&common)?;
            let mut cfg = FractalConfig {
                size,
                coherence,
                phase_span: phase_span.unwrap_or(FractalConfig::default().phase_span),
                seed: s.seed,
                params: s.cfg.params.clone(),
                ..FractalConfig::default()
            };
            cfg.methods = methods(common.methods.as_deref(), &cfg.methods, s.cfg.k)?;
            if let Some(t) = s.trials {
                cfg.trials = t;
            }
            let res = fractal_experiment(&cfg)?;
            let mut report = res.report;
            report.files.push(write(out, "fractal_truth", res.truth.clone())?);
            render_raster(&res.truth, out.join("fractal_truth.pgm"), Stretch::Phase)?;
            for (m, stats) in &res.stats {
                let name = m.name();
                report.files.push(write(out, &format!("fractal_{name}_bias"), stats.bias.clone())?);
                report.files.push(write(out, &format!("fractal_{name}_std"), stats.std.clone())?);
                render_raster(&stats.bias, out.join(format!("fractal_{name}_bias.pgm")), Stretch::Phase)?;
                render_raster(
                    &stats.std,
                    out.join(format!("fractal_{name}_std.pgm")),
                    Stretch::Fixed { lo: 0.0, hi: 0.5 },
                )?;
            }
            finish_report(out, report)
        }
    }
}
