use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use spoofgap::config::{PipelineConfig, RawConfig, DEFAULT_SEED};
use spoofgap::corpus::{load_manifest, Split};
use spoofgap::fixtures::{default_fixture_specs, generate_fixture_corpora};
use spoofgap::pipeline::{run_pipeline, Run};
use spoofgap::report;
use spoofgap::{Error, Result};

#[derive(Parser)]
#[command(name = "spoofgap", version, about = "Corpus-mismatch analytics for voice anti-spoofing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration file (TOML key-value).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Feature cache directory (default: <out>/cache).
    #[arg(long, global = true, value_name = "DIR")]
    cache: Option<PathBuf>,
    /// Comma-separated, e.g. lfcc-gmm,cqcc-gmm.
    #[arg(long, global = true, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    /// Comma-separated subset of ltas,snr,noise,xvec,f0,formants,loudness.
    #[arg(long, global = true, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Trial lists per corpus.
    #[arg(long, global = true, value_name = "N")]
    ntest: Option<usize>,
    /// GMM mixture components.
    #[arg(long, global = true, value_name = "K")]
    components: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus manifests.
    #[command(subcommand)]
    Manifest(ManifestCmd),
    /// Synthetic fixture corpora.
    #[command(subcommand)]
    Fixtures(FixturesCmd),
    /// Train subsets and trial lists.
    #[command(subcommand)]
    Protocol(ProtocolCmd),
    /// Quality and countermeasure front-end features.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// GMM countermeasures.
    #[command(subcommand)]
    Cm(CmCmd),
    /// Chamfer distances between partitions.
    #[command(subcommand)]
    Distances(DistancesCmd),
    /// Experiment table, correlations and regression models.
    Analyze,
    /// EER matrix, EER distribution, LTAS export and summary.
    Report,
    /// Every stage in order.
    RunAll,
}

#[derive(Subcommand)]
enum ManifestCmd {
    /// Parse manifests and check every audio file header.
    Validate {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FixturesCmd {
    /// Write synthetic corpora, an x-vector file and a pipeline.toml under --out.
    Generate {
        #[arg(long, default_value_t = 7)]
        corpora: usize,
    },
}

#[derive(Subcommand)]
enum ProtocolCmd {
    Sample,
}

#[derive(Subcommand)]
enum FeaturesCmd {
    Extract,
}

#[derive(Subcommand)]
enum CmCmd {
    Train,
    Score,
}

#[derive(Subcommand)]
enum DistancesCmd {
    Compute,
}

impl Global {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        let cli = RawConfig {
            seed: self.seed,
            out: self.out.clone(),
            cache: self.cache.clone(),
            classifiers: self.classifiers.clone(),
            features: self.features.clone(),
            ntest: self.ntest,
            components: self.components,
            ..Default::default()
        };
        PipelineConfig::resolve(file.overlay(cli))
    }

    fn run(&self) -> Result<Run> {
        let cfg = self.pipeline_config()?;
        cfg.write_resolved()?;
        Run::open(cfg)
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Manifest(ManifestCmd::Validate { manifests }) => {
            for path in manifests {
                let m = load_manifest(path)?;
                m.validate_audio()?;
                let (tb, ts) = m.class_counts(Split::Train);
                let (eb, es) = m.class_counts(Split::Eval);
                println!(
                    "{}: {} records; train {tb} bonafide / {ts} spoof, {} speakers; eval {eb} bonafide / {es} spoof, {} speakers",
                    m.corpus_id,
                    m.records.len(),
                    m.speakers(Split::Train).len(),
                    m.speakers(Split::Eval).len()
                );
            }
        }
        Command::Fixtures(FixturesCmd::Generate { corpora }) => {
            let out = g.out.clone().ok_or_else(|| Error::Config("fixtures generate needs --out".into()))?;
            let set = generate_fixture_corpora(&default_fixture_specs(*corpora, g.seed.unwrap_or(DEFAULT_SEED)), &out)?;
            for m in &set.manifests {
                println!("{}", m.display());
            }
            println!("config: {}", set.config.display());
        }
        Command::Protocol(ProtocolCmd::Sample) => {
            let run = g.run()?;
            for p in run.sample_protocols()? {
                println!("{}: {} train, {} trial lists", p.corpus_id, p.train_subset.len(), p.trial_lists.len());
            }
        }
        Command::Features(FeaturesCmd::Extract) => {
            let run = g.run()?;
            let protocols = run.protocols()?;
            let quality = run.quality(&protocols)?;
            let n = run.extract_cm(&protocols)?;
            let q: usize = quality.iter().map(|t| t.len()).sum();
            println!("quality sets: {q}, front-end matrices: {n}");
        }
        Command::Cm(CmCmd::Train) => {
            let run = g.run()?;
            for f in run.train(&run.protocols()?)? {
                println!("{} {} {}: {} frames, {} EM iterations", f.classifier, f.corpus, f.label, f.n_frames, f.em_iterations);
            }
        }
        Command::Cm(CmCmd::Score) => {
            let run = g.run()?;
            println!("scored {} utterances", run.score(&run.protocols()?)?);
        }
        Command::Distances(DistancesCmd::Compute) => {
            let run = g.run()?;
            let protocols = run.protocols()?;
            let quality = run.quality(&protocols)?;
            let rows = run.distances(&protocols, &quality)?;
            std::fs::create_dir_all(&run.cfg.out).map_err(|e| Error::io(&run.cfg.out, e))?;
            let path = run.cfg.out.join(report::DISTANCES);
            std::fs::write(&path, report::distances_csv(&rows)).map_err(|e| Error::io(&path, e))?;
            println!("{} distance rows", rows.len());
        }
        Command::Analyze => {
            let run = g.run()?;
            let protocols = run.protocols()?;
            let rows = run.experiments(&protocols, &run.read_distances()?)?;
            let analysis = run.analyze(&rows)?;
            run.write_analysis(&rows, &analysis)?;
            println!("{} experiment rows, {} regression fits", rows.len(), analysis.fits.len());
        }
        Command::Report => {
            let run = g.run()?;
            let protocols = run.protocols()?;
            let rows = run.read_experiments()?;
            let analysis = run.analyze(&rows)?;
            let quality = run.quality(&protocols)?;
            let fits = run.model_fits().unwrap_or_default();
            let summary = run.emit_report(&rows, &analysis, &quality, &fits)?;
            print_summary(&summary);
        }
        Command::RunAll => {
            let out = run_pipeline(g.pipeline_config()?)?;
            print_summary(&out.summary);
        }
    }
    Ok(())
}

fn print_summary(s: &spoofgap::pipeline::Summary) {
    for (clf, c) in &s.rows {
        let eer = &s.mean_eer[clf];
        println!(
            "{clf}: {} within / {} across rows, mean EER {:.2}% within, {:.2}% across",
            c.within, c.across, eer["within"], eer["across"]
        );
    }
    for w in &s.warnings {
        println!("warning: {w}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("spoofgap: {e}");
            ExitCode::from(e.exit_class() as u8)
        }
    }
}
