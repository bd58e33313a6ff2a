//! `grbas`: data preparation, feature extraction, training and evaluation.

mod commands;
mod config;
mod labels;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grbas::train::TrainError;

use config::{RunConfig, UsageError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NON_FINITE: u8 = 3;

/// Declares a flag struct whose fields are optional strings named after config keys.
macro_rules! flags {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Args)]
        struct $name {
            $($(#[$fmeta])* #[arg(long)] $field: Option<String>,)*
        }

        impl $name {
            fn into_flags(self) -> Vec<(&'static str, Option<String>)> {
                vec![$((stringify!($field), self.$field)),*]
            }
        }
    };
}

flags!(PrepArgs {
    /// Directory of source WAV files
    audio_dir,
    /// Assessments CSV
    ratings,
    /// Manifest CSV to write
    out,
    /// Rater whose grades label the files
    reference_rater,
    /// CSV mapping file_id to speaker_id
    speakers,
    /// CSV of manual status overrides
    review,
});

flags!(BlindArgs {
    /// Manifest CSV, rewritten in place
    manifest,
    seed,
    /// Mapping CSV to write (default: blind_map.csv beside the manifest)
    mapping,
});

flags!(SplitArgs {
    manifest,
    /// Number of tables (default 5)
    k,
    seed,
    /// Fold plan to write
    out,
});

flags!(AugmentArgs {
    manifest,
    /// Directory of source WAV files (default: the manifest's directory)
    audio_dir,
    out_dir,
});

flags!(FeaturizeArgs {
    /// Clip index written by `augment` or `synth`
    index,
    out_dir,
    /// Clip labels, manifest or assessments (default: labels.csv beside the index)
    labels,
    reference_rater,
});

flags!(SynthArgs {
    /// Files per grade
    n,
    seed,
    /// Seconds per file (default 1)
    duration,
    out_dir,
});

flags!(TrainArgs {
    /// Feature directory from `featurize`
    features,
    /// Label file (default: <features>/labels.csv)
    labels,
    reference_rater,
    /// Fold plan; enables cross-validation
    plan,
    out_dir,
    epochs,
    learning_rate,
    batch_size,
    /// L2 weight on the regularised kernels
    lambda,
    seed,
    /// 32 or 64
    precision,
});

flags!(EvaluateArgs {
    /// CSV with `reference` and `predicted` columns; skips the model
    predictions,
    /// Checkpoint from `train`
    model,
    features,
    labels,
    reference_rater,
    out_dir,
});

flags!(AgreementArgs {
    ratings,
    /// CSV to write (default: stdout)
    out,
});

flags!(ReportArgs {
    /// Training output directory (history.csv, weights.csv, summary.csv)
    history,
    /// Directory of model.ckpt files for final weights
    weights,
    /// Directory to write CSV series into
    out,
    /// Checkpoint for activation dumps (default: first under --weights)
    model,
    features,
    /// Clip name to dump activations for
    clip,
});

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a manifest from audio files and assessments
    Prep(PrepArgs),
    /// Assign randomised names to manifest entries
    Blind(BlindArgs),
    /// Partition files into grade-stratified tables
    Split(SplitArgs),
    /// Resample and expand each file into augmented one-second clips
    Augment(AugmentArgs),
    /// Compute cepstrograms for indexed clips
    Featurize(FeaturizeArgs),
    /// Generate synthetic graded voices
    Synth(SynthArgs),
    /// Train a model, optionally with cross-validation
    Train(TrainArgs),
    /// Score predictions against reference grades
    Evaluate(EvaluateArgs),
    /// Intra- and inter-rater agreement from assessments
    Agreement(AgreementArgs),
    /// Collect training curves, weights and activations into CSVs
    Report(ReportArgs),
}

#[derive(Debug, Parser)]
#[command(name = "grbas", version, about = "GRBAS grade estimation from voice recordings")]
struct Cli {
    /// `key = value` file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = cli.config.as_deref();
    let (name, flags, handler): (&'static str, _, fn(&RunConfig) -> anyhow::Result<()>) = match cli.command {
        Command::Prep(a) => ("prep", a.into_flags(), commands::data::prep),
        Command::Blind(a) => ("blind", a.into_flags(), commands::data::blind),
        Command::Split(a) => ("split", a.into_flags(), commands::data::split),
        Command::Augment(a) => ("augment", a.into_flags(), commands::audio::augment),
        Command::Featurize(a) => ("featurize", a.into_flags(), commands::audio::featurize),
        Command::Synth(a) => ("synth", a.into_flags(), commands::audio::synth),
        Command::Train(a) => ("train", a.into_flags(), commands::model::train_cmd),
        Command::Evaluate(a) => ("evaluate", a.into_flags(), commands::model::evaluate_cmd),
        Command::Agreement(a) => ("agreement", a.into_flags(), commands::report::agreement),
        Command::Report(a) => ("report", a.into_flags(), commands::report::report),
    };
    handler(&RunConfig::load(name, file, flags)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(TrainError::NonFinite { .. }) = cause.downcast_ref::<TrainError>() {
            return EXIT_NON_FINITE;
        }
        if let Some(grbas::Error::Train(TrainError::NonFinite { .. })) = cause.downcast_ref::<grbas::Error>() {
            return EXIT_NON_FINITE;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
