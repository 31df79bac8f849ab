use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use incstab_cli::{exit_code, jobs, run_file, svg, validate_file, EXIT_ERROR};

/// Incremental-stability certification of feedback interconnections.
#[derive(Parser)]
#[command(name = "incstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the job described by a JSON configuration file.
    Run { config: PathBuf },
    /// Check a configuration file without running its job.
    Validate { config: PathBuf },
    /// Render a cloud CSV (columns re,im) and region literals to SVG.
    ///
    /// Region literals are JSON (`{"disc":{"re":0,"im":0,"r":1}}`) or the
    /// compact forms `disc:RE,IM,R`, `halfplane:NRE,NIM,OFFSET`,
    /// `discext:RE,IM,R`. The last argument is the output SVG path.
    Plot {
        cloud: PathBuf,
        #[arg(required = true, num_args = 1..)]
        rest: Vec<String>,
    },
}

fn plot(cloud: &PathBuf, rest: &[String]) -> Result<String> {
    let Some((out, literals)) = rest.split_last() else { bail!("missing output path") };
    let text = fs::read_to_string(cloud).with_context(|| format!("reading {}", cloud.display()))?;
    let points = jobs::read_cloud(&text)?;
    let regions = literals.iter().map(|l| jobs::parse_region_literal(l)).collect::<Result<Vec<_>>>()?;
    let seed = text.lines().next().and_then(|l| l.strip_prefix("# seed=")).and_then(|s| s.trim().parse().ok());
    let doc = svg::srg_plot(&points, &regions, seed, &cloud.display().to_string());
    jobs::write_artifacts(&[(PathBuf::from(out), doc.into_bytes())])?;
    Ok(format!("wrote {} ({} points, {} regions)", out, points.len(), regions.len()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run_file(config).map(|o| {
            println!("{}", o.summary);
            exit_code(&o)
        }),
        Command::Validate { config } => validate_file(config).map(|msg| {
            println!("{msg}");
            0
        }),
        Command::Plot { cloud, rest } => plot(cloud, rest).map(|msg| {
            println!("{msg}");
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
