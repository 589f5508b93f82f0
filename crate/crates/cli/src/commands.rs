use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ntg_core::harness::{
    self, cost_map, default_control_points, mean_displacement, rmse_report, synth_pair, AxisRange, PairOptions,
    RmseReport, SimilarityParams, SparsityConfig,
};
use ntg_core::io::{self, RasterFormat};
use ntg_core::transform::{random_affine, warp};
use ntg_core::{
    register, register_stack, AffineParams, ChannelStack, DEConfig, Image2D, ParamBounds, RegisterConfig,
    RegistrationResult, SmoothAbsConfig, SyntheticScene,
};
use serde::{Deserialize, Serialize};

use crate::{
    CostmapArgs, EvalArgs, OutputFormat, RegisterArgs, RegisterOpts, RegisterStackArgs, SparsityArgs, SynthArgs,
};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 2,
            Self::Failed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(m) | Self::Failed(m) => f.write_str(m),
        }
    }
}

impl From<ntg_core::Error> for CliError {
    fn from(e: ntg_core::Error) -> Self {
        use ntg_core::Error as E;
        match e {
            E::InvalidInput(_) | E::Io(_) | E::Json(_) => Self::Invalid(e.to_string()),
            E::DegenerateOverlap | E::DegenerateContent(_) | E::OptimizationFailed(_) => Self::Failed(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Invalid(msg.into()))
}

pub fn run(cmd: crate::Command) -> Result<()> {
    use crate::Command as C;
    match cmd {
        C::Register(a) => cmd_register(a),
        C::RegisterStack(a) => cmd_register_stack(a),
        C::Costmap(a) => cmd_costmap(a),
        C::Sparsity(a) => cmd_sparsity(a),
        C::Eval(a) => cmd_eval(a),
        C::Synth(a) => cmd_synth(a),
    }
}

/// Ground truth written by `synth` and read by `eval`.
#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    width: usize,
    height: usize,
    reference: Option<usize>,
    truths: Vec<AffineParams>,
}

#[derive(Debug, Serialize)]
struct ChannelSummary {
    channel: usize,
    ntg_final: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct StackSummary {
    reference: usize,
    channels: Vec<ChannelSummary>,
}

#[derive(Debug, Serialize)]
struct CostmapAxes {
    measure: ntg_core::Measure,
    axis1: AxisRange,
    axis2: AxisRange,
    at: SimilarityParams,
    /// Held-fixed point in fractional grid coordinates.
    truth: (f64, f64),
    argmin: (usize, usize),
    argmin_values: (f64, f64),
    min: f64,
    layout: &'static str,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    #[serde(flatten)]
    rmse: RmseReport,
    per_channel_mean_displacement: Vec<f64>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn read_image(path: &Path) -> Result<Image2D> {
    if !path.is_file() {
        return invalid(format!("no such file: {}", path.display()));
    }
    io::read_image(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(ntg_core::Error::from)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn bounds_from(values: &Option<Vec<f64>>) -> Result<ParamBounds> {
    match values {
        None => Ok(ParamBounds::DEFAULT),
        Some(v) if v.len() == 12 => {
            let mut lo = [0.0; 6];
            let mut hi = [0.0; 6];
            lo.copy_from_slice(&v[..6]);
            hi.copy_from_slice(&v[6..]);
            Ok(ParamBounds::new(lo, hi)?)
        }
        Some(v) => invalid(format!("--bounds needs 12 values, got {}", v.len())),
    }
}

fn register_config(o: &RegisterOpts) -> Result<RegisterConfig> {
    if o.layers == 0 {
        return invalid("--layers must be at least 1");
    }
    if o.de_gens == 0 {
        return invalid("--de-gens must be at least 1");
    }
    if o.bins < 2 {
        return invalid("--bins must be at least 2");
    }
    let de = DEConfig {
        population: o.de_pop,
        generations: o.de_gens,
        f: o.de_f,
        cr: o.de_cr,
        bounds: bounds_from(&o.bounds)?,
        seed: o.de_seed,
    };
    de.validate()?;
    Ok(RegisterConfig {
        layers: o.layers,
        de,
        newton_iters: o.newton_iters,
        smooth: SmoothAbsConfig::new(o.smooth_c)?,
        measure: o.measure,
        mode: o.mode,
        bins: o.bins,
    })
}

fn format_of(explicit: Option<OutputFormat>, input: &Path) -> Result<OutputFormat> {
    if let Some(f) = explicit {
        return Ok(f);
    }
    Ok(match RasterFormat::from_path(input)? {
        RasterFormat::Pgm => OutputFormat::Pgm,
        RasterFormat::RawF32 => OutputFormat::F32,
    })
}

fn write_image(path: &Path, img: &Image2D) -> Result<()> {
    io::write_image(path, img).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn cmd_register(a: RegisterArgs) -> Result<()> {
    let cfg = register_config(&a.opts)?;
    let f = read_image(&a.floating)?;
    let r = read_image(&a.reference)?;
    let fmt = format_of(a.format, &a.floating)?;
    out_dir(&a.output)?;
    let res = register(&f, &r, &cfg)?;
    let (g, _) = warp(&f, &res.p_final, r.dims())?;
    write_json(&a.output.join("transform.json"), &res)?;
    write_image(&a.output.join(format!("registered.{}", fmt.extension())), &g)?;
    io::write_overlay(&a.output.join("overlay.ppm"), &r, &g)?;
    eprintln!("ntg: p = {:?}, NTG = {:.6}", res.p_final.p, res.ntg_final);
    Ok(())
}

/// Channel files `chNN.<ext>` sorted by number; numbers must run 0..n.
fn list_channels(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", dir.display())))?;
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Invalid(e.to_string()))?.path();
        if RasterFormat::from_path(&path).is_err() {
            continue;
        }
        let Some(n) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("ch"))
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
        else {
            continue;
        };
        found.push((n, path));
    }
    found.sort();
    if found.is_empty() {
        return invalid(format!("no chNN.pgm or chNN.f32 files in {}", dir.display()));
    }
    for (i, (n, p)) in found.iter().enumerate() {
        if *n != i {
            return invalid(format!("channel numbering has a gap or duplicate at {}", p.display()));
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn read_stack(dir: &Path, reference: Option<usize>) -> Result<(ChannelStack, Vec<PathBuf>)> {
    let paths = list_channels(dir)?;
    let reference = reference.unwrap_or(ChannelStack::middle_index(paths.len()));
    if reference >= paths.len() {
        return invalid(format!("reference channel {reference} out of range for {} channels", paths.len()));
    }
    let channels = paths.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
    Ok((ChannelStack::new(channels, reference)?, paths))
}

fn cmd_register_stack(a: RegisterStackArgs) -> Result<()> {
    let cfg = register_config(&a.opts)?;
    let (stack, paths) = read_stack(&a.input, a.reference)?;
    let fmt = format_of(a.format, &paths[0])?;
    out_dir(&a.output)?;
    let results = register_stack(&stack, &cfg);
    let mut summary = StackSummary { reference: stack.reference_index(), channels: Vec::new() };
    let mut failures = 0;
    for (c, res) in results.into_iter().enumerate() {
        match res {
            Ok(res) => {
                let (g, _) = warp(&stack.channels()[c], &res.p_final, stack.dims())?;
                write_json(&a.output.join(format!("ch{c:02}.transform.json")), &res)?;
                write_image(&a.output.join(format!("ch{c:02}.{}", fmt.extension())), &g)?;
                summary.channels.push(ChannelSummary { channel: c, ntg_final: Some(res.ntg_final), error: None });
            }
            Err(e) => {
                eprintln!("ntg: channel {c}: {e}");
                failures += 1;
                summary.channels.push(ChannelSummary { channel: c, ntg_final: None, error: Some(e.to_string()) });
            }
        }
    }
    write_json(&a.output.join("summary.json"), &summary)?;
    if failures > 0 {
        return Err(CliError::Failed(format!("{failures} of {} channels failed to register", stack.len())));
    }
    Ok(())
}

fn axis_range(axis: harness::CostAxis, v: &[f64], flag: &str) -> Result<AxisRange> {
    if v.len() != 3 {
        return invalid(format!("{flag} needs lo,hi,steps"));
    }
    let steps = v[2];
    if !(steps >= 1.0 && steps.fract() == 0.0) {
        return invalid(format!("{flag} step count must be a positive integer, got {steps}"));
    }
    Ok(AxisRange::new(axis, v[0], v[1], steps as usize)?)
}

fn cmd_costmap(a: CostmapArgs) -> Result<()> {
    if a.axes.len() != 2 {
        return invalid("--axes needs exactly two axes");
    }
    if a.at.len() != 4 {
        return invalid("--at needs tx,ty,rot,scale");
    }
    let f = read_image(&a.floating)?;
    let r = read_image(&a.reference)?;
    let a1 = axis_range(a.axes[0], &a.range1, "--range1")?;
    let a2 = axis_range(a.axes[1], &a.range2, "--range2")?;
    let at = SimilarityParams { tx: a.at[0], ty: a.at[1], rot: a.at[2], scale: a.at[3] };
    out_dir(&a.output)?;
    let map = cost_map(&f, &r, a.measure, a1, a2, at, a.bins)?;
    let (w, h) = (map.axis1.steps, map.axis2.steps);
    io::write_f32_grid(&a.output.join("costmap.f32"), w, h, &map.values)?;
    io::write_heat(&a.output.join("costmap.pgm"), w, h, &map.values)?;
    let axes = CostmapAxes {
        measure: map.measure,
        axis1: map.axis1,
        axis2: map.axis2,
        at,
        truth: map.truth,
        argmin: map.argmin(),
        argmin_values: map.argmin_values(),
        min: map.min(),
        layout: "row-major, axis1 along x",
    };
    write_json(&a.output.join("costmap_axes.json"), &axes)
}

fn cmd_sparsity(a: SparsityArgs) -> Result<()> {
    if a.trials == 0 {
        return invalid("--trials must be at least 1");
    }
    let cfg =
        SparsityConfig { trials: a.trials, bounds: bounds_from(&a.bounds)?, seed: a.seed, min_misalignment: a.min_misalignment };
    let stack = match &a.input {
        Some(dir) => read_stack(dir, a.reference)?.0,
        None => {
            let mut s = SyntheticScene::new(a.width, a.height, a.channels, a.seed)?.aligned_stack()?;
            if let Some(r) = a.reference {
                s = ChannelStack::new(s.channels().to_vec(), r)?;
            }
            s
        }
    };
    out_dir(&a.output)?;
    let report = harness::sparsity_study(&stack, &cfg)?;
    eprintln!("ntg: fraction satisfying {:.4}", report.fraction_satisfying);
    write_json(&a.output.join("sparsity.json"), &report)
}

fn read_result(path: &Path) -> Result<RegistrationResult> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let truth: TruthFile = serde_json::from_slice(&read_file(&a.truth)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", a.truth.display())))?;
    let estimates: Vec<AffineParams> = if a.estimates.is_dir() {
        (0..truth.truths.len())
            .map(|c| read_result(&a.estimates.join(format!("ch{c:02}.transform.json"))).map(|r| r.p_final))
            .collect::<Result<_>>()?
    } else {
        vec![read_result(&a.estimates)?.p_final]
    };
    if estimates.len() != truth.truths.len() {
        return invalid(format!("{} truths but {} estimates", truth.truths.len(), estimates.len()));
    }
    if truth.width < 2 || truth.height < 2 {
        return invalid("truth file image size must be at least 2x2");
    }
    let points = default_control_points(truth.width, truth.height);
    out_dir(&a.output)?;
    let rmse = rmse_report(&truth.truths, &estimates, &points)?;
    let per_channel_mean_displacement = truth
        .truths
        .iter()
        .zip(&estimates)
        .map(|(t, e)| mean_displacement(t, e, &points))
        .collect::<ntg_core::Result<Vec<_>>>()?;
    write_json(&a.output.join("eval.json"), &EvalReport { rmse, per_channel_mean_displacement })
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let bounds = bounds_from(&a.bounds)?;
    let ext = a.format.extension();
    match a.channels {
        Some(n) => {
            if n == 0 {
                return invalid("--channels must be at least 1");
            }
            let scene = SyntheticScene::new(a.width, a.height, n, a.seed)?;
            let (stack, truths) = scene.misaligned_stack(&bounds, a.seed)?;
            out_dir(&a.output)?;
            for (c, img) in stack.channels().iter().enumerate() {
                write_image(&a.output.join(format!("ch{c:02}.{ext}")), img)?;
            }
            let t = TruthFile { width: a.width, height: a.height, reference: Some(stack.reference_index()), truths };
            write_json(&a.output.join("truth.json"), &t)
        }
        None => {
            let truth = random_affine(bounds.lo, bounds.hi, a.seed)?;
            let opts = PairOptions { noise_sigma: a.noise, invert: a.invert, erasures: a.erasures, gamma: a.gamma };
            let pair = synth_pair(a.width, a.height, &truth, &opts, a.seed)?;
            out_dir(&a.output)?;
            write_image(&a.output.join(format!("reference.{ext}")), &pair.reference)?;
            write_image(&a.output.join(format!("floating.{ext}")), &pair.floating)?;
            let t = TruthFile { width: a.width, height: a.height, reference: None, truths: vec![pair.truth] };
            write_json(&a.output.join("truth.json"), &t)
        }
    }
}
