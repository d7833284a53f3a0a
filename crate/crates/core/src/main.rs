use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use nearfield::config::{ConfigFile, Preset};
use nearfield::correlation::{far_field_representative_correlation, representative_correlation};
use nearfield::io;
use nearfield::sim::{run_nmse_with_subspaces, RepresentativeSubspaces};
use nearfield::subspace::eigendecompose;
use nearfield::validate::run_validation;
use nearfield::{Error, Result};

/// Near-field channel subspaces and estimators for uniform planar arrays.
///
/// Set RAYON_NUM_THREADS to limit the number of worker threads. Results do
/// not depend on the thread count.
#[derive(Debug, Parser)]
#[command(name = "nearfield", version)]
struct Cli {
    /// TOML file with preset tables; the built-in presets are used if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Preset name.
    #[arg(long, global = true, default_value = "fig3")]
    preset: String,

    /// Root output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Write to `<out>/<subcommand>/<preset>/fixed` instead of a timestamped directory.
    #[arg(long, global = true)]
    fixed_output: bool,

    /// Override a preset key, e.g. `--set trials=200`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalue spectra of the near-field and far-field representative matrices.
    Eigenspectrum,
    /// Monte Carlo NMSE of every estimator versus the number of coherence blocks.
    Nmse {
        /// Pilot SNR in dB; replaces the preset list. Repeatable.
        #[arg(long = "snr-db", allow_negative_numbers = true)]
        snr_db: Vec<f64>,
    },
    /// Write a representative correlation matrix to disk.
    DumpCorrelation {
        #[arg(long, value_enum, default_value_t = Kind::NearField)]
        kind: Kind,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
    },
    /// Run the numerical self-checks.
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    #[value(name = "nf")]
    NearField,
    #[value(name = "ff")]
    FarField,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Eigenspectrum => "eigenspectrum",
            Command::Nmse { .. } => "nmse",
            Command::DumpCorrelation { .. } => "dump-correlation",
            Command::Validate => "validate",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::builtin(),
    };
    let mut preset = file.preset(&cli.preset)?.with_overrides(&cli.overrides)?;
    if let Command::Nmse { snr_db } = &cli.command {
        if !snr_db.is_empty() {
            preset.snr_db = snr_db.clone();
        }
    }
    preset.validate()?;

    if let Command::Validate = cli.command {
        let report = run_validation(&preset)?;
        print!("{report}");
        return Ok(report.all_passed());
    }

    let dir = output_dir(cli)?;
    match &cli.command {
        Command::Eigenspectrum => eigenspectrum(&preset, &cli.preset, &dir)?,
        Command::Nmse { .. } => nmse(&preset, &cli.preset, &dir)?,
        Command::DumpCorrelation { kind, format } => dump(&preset, &cli.preset, *kind, *format, &dir)?,
        Command::Validate => unreachable!(),
    }
    println!("wrote {}", dir.display());
    Ok(true)
}

fn output_dir(cli: &Cli) -> Result<PathBuf> {
    let leaf = if cli.fixed_output {
        "fixed".to_string()
    } else {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        secs.to_string()
    };
    let dir = cli.out.join(cli.command.name()).join(&cli.preset).join(leaf);
    fs::create_dir_all(&dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).context(format!("creating {}", path.display())))
}

fn base_metadata(preset: &Preset, name: &str) -> Vec<(String, String)> {
    vec![
        ("preset".into(), name.into()),
        ("m_h".into(), preset.m_h.to_string()),
        ("m_v".into(), preset.m_v.to_string()),
        ("wavelength".into(), preset.wavelength.to_string()),
        ("spacing_wavelengths".into(), preset.spacing_wavelengths.to_string()),
        ("azimuth".into(), preset.azimuth.join(",")),
        ("elevation".into(), preset.elevation.join(",")),
        ("beta".into(), preset.beta.to_string()),
    ]
}

fn eigenspectrum(preset: &Preset, name: &str, dir: &Path) -> Result<()> {
    let geometry = preset.geometry()?;
    let mut far_done = false;
    for d in &preset.spectrum_distances {
        let region = preset.region_at(*d)?;
        let mut runs = vec![("nf", representative_correlation(&geometry, &region, preset.beta)?)];
        // The far-field matrix does not depend on the distance range.
        if !far_done {
            runs.push(("ff", far_field_representative_correlation(&geometry, &region, preset.beta)?));
            far_done = true;
        }
        for (tag, matrix) in runs {
            let spectrum = eigendecompose(&matrix)?;
            let rank = spectrum.effective_rank(preset.rank_fraction)?;
            let file = if tag == "nf" {
                format!("eigenspectrum-nf-{}-{}.csv", d[0], d[1])
            } else {
                "eigenspectrum-ff.csv".to_string()
            };
            let mut meta = base_metadata(preset, name);
            meta.push(("kind".into(), tag.into()));
            if tag == "nf" {
                meta.push(("distance".into(), format!("{},{}", d[0], d[1])));
            }
            meta.push(("effective_rank".into(), rank.to_string()));
            io::write_eigenspectrum_csv(create(&dir.join(&file))?, &spectrum, &meta)?;
            println!("{tag} d=[{}, {}]  effective rank {rank} of {}", d[0], d[1], matrix.dim());
        }
    }
    Ok(())
}

fn nmse(preset: &Preset, name: &str, dir: &Path) -> Result<()> {
    let first = preset.experiment(preset.snr_db[0])?;
    let cache = preset.cache_dir();
    let subspaces = RepresentativeSubspaces::build(&first, cache.as_deref())?;
    println!(
        "subspace ranks: near field {}, far field {}",
        subspaces.near.rank(),
        subspaces.far.rank()
    );
    for &snr in &preset.snr_db {
        let config = preset.experiment(snr)?;
        let curve = run_nmse_with_subspaces(&config, &subspaces)?;
        let mut meta = base_metadata(preset, name);
        meta.extend([
            ("snr_db".into(), snr.to_string()),
            ("distance".into(), format!("{},{}", preset.distance[0], preset.distance[1])),
            ("clusters".into(), preset.clusters.to_string()),
            ("trials".into(), preset.trials.to_string()),
            ("seed".into(), preset.seed.to_string()),
            ("near_rank".into(), subspaces.near.rank().to_string()),
            ("far_rank".into(), subspaces.far.rank().to_string()),
        ]);
        io::write_nmse_csv(create(&dir.join(format!("nmse-snr{snr}dB.csv")))?, &curve, &meta)?;
        println!("snr {snr} dB: {} trials x {} blocks done", curve.trials, curve.blocks);
    }
    Ok(())
}

fn dump(preset: &Preset, name: &str, kind: Kind, format: Format, dir: &Path) -> Result<()> {
    let geometry = preset.geometry()?;
    let region = preset.region()?;
    let (matrix, tag, far) = match kind {
        Kind::NearField => (representative_correlation(&geometry, &region, preset.beta)?, "nf", false),
        Kind::FarField => (far_field_representative_correlation(&geometry, &region, preset.beta)?, "ff", true),
    };
    match format {
        Format::Binary => io::write_correlation_binary(&dir.join(format!("correlation-{tag}.bin")), &matrix, far)?,
        Format::Csv => {
            let mut meta = base_metadata(preset, name);
            meta.push(("kind".into(), tag.into()));
            io::write_correlation_csv(create(&dir.join(format!("correlation-{tag}.csv")))?, &matrix, &meta)?
        }
    }
    Ok(())
}
