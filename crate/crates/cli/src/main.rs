use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmsc_cli::{
    cmd_evaluate, cmd_pipeline, cmd_receive, cmd_score, cmd_sweep, cmd_transmit, report, CliError,
    PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "mmsc",
    version,
    about = "Query-guided semantic image transmission"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the relevance map and write it as an archive and a PGM heatmap
    Score(Opts),
    /// Allocate, encode and send an image through the channel
    Transmit(Opts),
    /// Decode a frame into a PPM image
    Receive(Opts),
    /// Compute metrics for a reconstruction and write a CSV row
    Evaluate(Opts),
    /// Run a corpus at several channel rates and write CSV and SVG plots
    Sweep(Opts),
    /// score, transmit, receive and evaluate in one go
    Pipeline(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// Flat key = value file; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    archive: Option<String>,
    /// Ground-truth mask (PGM, >= 128 is inside)
    #[arg(long)]
    mask: Option<String>,
    /// Channel rate as a fraction of the all-raw payload, 0..=1
    #[arg(long, conflicts_with = "budget")]
    rate: Option<String>,
    /// Channel budget in payload bytes
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    patch_size: Option<String>,
    /// Comma-separated bytes per level, starting at 0
    #[arg(long)]
    rates: Option<String>,
    /// Score with the blurred ground-truth mask instead of exported tensors
    #[arg(long)]
    toy: bool,
    #[arg(long)]
    blur_radius: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Directory of <id>.ppm images with optional <id>.pgm masks and <id>.mmta archives
    #[arg(long)]
    corpus: Option<String>,
    /// Frame file to write (transmit) or read (receive, evaluate)
    #[arg(long)]
    frame: Option<String>,
    /// Reconstructed image to write (receive) or read (evaluate)
    #[arg(long)]
    recon: Option<String>,
    /// Archive exported from the reconstructed image
    #[arg(long)]
    recon_archive: Option<String>,
    /// Comma-separated channel rates for sweep
    #[arg(long)]
    sweep_rates: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut add = |k: &'static str, o: &Option<String>| {
            if let Some(s) = o {
                v.push((k, s.clone()));
            }
        };
        add("image", &self.image);
        add("archive", &self.archive);
        add("mask", &self.mask);
        add("rate", &self.rate);
        add("budget", &self.budget);
        add("patch-size", &self.patch_size);
        add("rates", &self.rates);
        add("blur-radius", &self.blur_radius);
        add("out-dir", &self.out_dir);
        add("corpus", &self.corpus);
        add("frame", &self.frame);
        add("recon", &self.recon);
        add("recon-archive", &self.recon_archive);
        add("sweep-rates", &self.sweep_rates);
        if self.toy {
            v.push(("toy", "true".into()));
        }
        v
    }

    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            // a rate flag replaces a budget from the file and vice versa
            cfg.set(k, &v)?;
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Score(o) => {
            let r = cmd_score(&o.resolve()?)?;
            println!("wrote {}", r.archive_path.display());
            println!("wrote {}", r.heatmap_path.display());
            if let Some(e) = r.scored.reference_error {
                println!("reference_error = {e:.3e}");
            }
        }
        Command::Transmit(o) => {
            let r = cmd_transmit(&o.resolve()?)?;
            print!(
                "{}",
                std::fs::read_to_string(&r.plan_path).unwrap_or_default()
            );
            println!("wrote {}", r.frame_path.display());
        }
        Command::Receive(o) => {
            let p = cmd_receive(&o.resolve()?)?;
            println!("wrote {}", p.display());
        }
        Command::Evaluate(o) => {
            let r = cmd_evaluate(&o.resolve()?)?;
            print!("{}", r.csv);
        }
        Command::Sweep(o) => {
            let r = cmd_sweep(&o.resolve()?)?;
            print!("{}", report::sweep_csv(&r.points));
            for f in &r.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Pipeline(o) => {
            let r = cmd_pipeline(&o.resolve()?)?;
            println!("wrote {}", r.transmit.frame_path.display());
            println!("wrote {}", r.recon_path.display());
            print!("{}", r.evaluate.csv);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
