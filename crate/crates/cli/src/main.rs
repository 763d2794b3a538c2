//! `emr4d`: encode, decode and analyse elemental image arrays.
//!
//! Exit codes: 0 success, 1 failure, 2 bad command line, 3 container
//! framing error, 4 damaged section payload.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use emr4d_core::codec::Bitstream;
use emr4d_core::color::yuv_to_rgb;
use emr4d_core::geometry::{EiaGrid, Profile};
use emr4d_core::image_io::{read_eia, read_rgb, write_eia, write_rgb, Rgb8};
use emr4d_core::lfbr::SynthesisOptions;
use emr4d_core::pipeline::{decode, encode, DecodeOptions};
use emr4d_core::quality::{render_central_view, QualityReport};
use emr4d_core::synth::{generate, SceneSpec, TextureKind};
use emr4d_core::Error;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "emr4d", version, about = "Light-field EIA codec")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "EMR4D_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode an EIA image into a .emr4d bitstream.
    Encode(EncodeArgs),
    /// Decode a bitstream into a PNG.
    Decode(DecodeArgs),
    /// Quality report between a reference and a decoded EIA.
    Metrics(MetricsArgs),
    /// Central rendered view of an EIA.
    Render(RenderArgs),
    /// Generate a synthetic EIA with ground truth.
    Synth(SynthArgs),
    /// Summarize a bitstream.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct Geometry {
    /// Elemental image side in pixels.
    #[arg(long, default_value_t = 75)]
    ei_size: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    P75,
    P150,
    P300,
    P1000,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::P75 => Profile::P75,
            ProfileArg::P150 => Profile::P150,
            ProfileArg::P300 => Profile::P300,
            ProfileArg::P1000 => Profile::P1000,
        }
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    /// Named operating point; sets lambda and interval.
    #[arg(long, value_enum, conflicts_with = "lambda")]
    profile: Option<ProfileArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    interval: Option<usize>,
    #[arg(long)]
    gop: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stats JSON path; printed to stdout when omitted.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Write the encoder-side key-EIA reconstruction.
    #[arg(long)]
    dump_key_eia: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    no_postfilter: bool,
    /// Write the synthesized key-EIA before reconstruction.
    #[arg(long)]
    dump_key_eia: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    decoded: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    /// Bitstream whose size gives the bpp field.
    #[arg(long)]
    bitstream: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TextureArg {
    Ramp,
    Checker,
    Noise,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory; receives eia.png and truth.json.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = TextureArg::Noise)]
    texture: TextureArg,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long, default_value_t = 4)]
    parallax_x: usize,
    #[arg(long, default_value_t = 4)]
    parallax_y: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_shadow: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
}

fn read_grid(path: &Path, ei_size: usize) -> Result<EiaGrid> {
    let img = read_rgb(path).with_context(|| format!("reading {}", path.display()))?;
    if ei_size == 0 || img.width % ei_size != 0 || img.height % ei_size != 0 {
        bail!("{}x{} image is not a whole number of {ei_size}-px EIs", img.width, img.height);
    }
    Ok(read_eia(path, img.height / ei_size, img.width / ei_size, ei_size)?)
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let mut cfg = a.profile.map(|p| Profile::from(p).config()).unwrap_or_default();
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(i) = a.interval {
        cfg.interval = i;
    }
    if let Some(g) = a.gop {
        cfg.gop = g;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let grid = read_grid(&a.input, a.geometry.ei_size)?;
    cfg.chroma_size = grid.ei_size.div_ceil(2);
    let out = encode(&grid, &cfg)?;
    fs::write(&a.output, &out.bytes).with_context(|| format!("writing {}", a.output.display()))?;
    if let Some(p) = &a.dump_key_eia {
        write_eia(p, &out.key_reconstruction)?;
    }
    write_json(a.stats.as_deref(), &out.stats)
}

fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let opts = DecodeOptions {
        synthesis: SynthesisOptions {
            postfilter: if a.no_postfilter { None } else { SynthesisOptions::default().postfilter },
            ..SynthesisOptions::default()
        },
    };
    let out = decode(&bytes, &opts)?;
    write_eia(&a.output, &out.eia)?;
    if let Some(p) = &a.dump_key_eia {
        write_eia(p, &out.key_eia)?;
    }
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let reference = read_grid(&a.reference, a.geometry.ei_size)?;
    let decoded = read_grid(&a.decoded, a.geometry.ei_size)?;
    let bits = match &a.bitstream {
        Some(p) => Some(fs::metadata(p)?.len() * 8),
        None => None,
    };
    let report = QualityReport::compute(&reference, &decoded, bits)?;
    println!("{}", report.to_json_line()?);
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let grid = read_grid(&a.input, a.geometry.ei_size)?;
    let view = render_central_view(&grid)?;
    let rgb = Rgb8 {
        width: view[0].width,
        height: view[0].height,
        data: yuv_to_rgb(&view)?,
    };
    write_rgb(&a.output, &rgb)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let texture = match a.texture {
        TextureArg::Ramp => TextureKind::Ramp,
        TextureArg::Checker => TextureKind::Checker,
        TextureArg::Noise => TextureKind::Noise,
    };
    let mut spec = SceneSpec::new(texture, a.rows, a.cols);
    spec.ei_size = a.geometry.ei_size;
    spec.parallax_x = a.parallax_x;
    spec.parallax_y = a.parallax_y;
    spec.seed = a.seed;
    if a.no_shadow {
        spec.shadow = Default::default();
    }
    let scene = generate(&spec)?;
    fs::create_dir_all(&a.output)?;
    write_eia(a.output.join("eia.png"), &scene.grid)?;
    let truth = json!({
        "spec": spec,
        "parallax": scene.parallax,
        "shadow": scene.shadow,
    });
    write_json(Some(&a.output.join("truth.json")), &truth)
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let bs = Bitstream::from_bytes(&bytes)?;
    let sizes = bs.section_sizes()?;
    let channels: Vec<_> = bs
        .channels
        .iter()
        .map(|c| {
            let mut hist = vec![0usize; c.table().max_models()];
            for b in &c.blocks {
                hist[b.k - 1] += 1;
            }
            json!({
                "channel": c.channel.name(),
                "blocks": c.blocks.len(),
                "raw_bits": c.raw_bits(),
                "mu_z_bits": c.mu_z_bits,
                "k_histogram": hist,
            })
        })
        .collect();
    let summary = json!({
        "bytes": bytes.len(),
        "geometry": bs.geometry,
        "sections": sizes.0.iter().map(|(t, s)| json!({"tag": t, "bytes": s})).collect::<Vec<_>>(),
        "max_offset": bs.parallax.max_offset(),
        "shadow": bs.shadow,
        "channels": channels,
    });
    write_json(None, &summary)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Render(a) => cmd_render(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Container(_)) => 3,
        Some(e) if e.is_payload() => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
