use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use docnet::data::{
    self, ColumnLayout, Schema, SplitSpec, SynthSpec, ATTACK, DEFAULT_CATEGORY_COLUMN,
};
use docnet::eval::{self, EvalConfig, EvalSuite, PcaConfig};
use docnet::pipeline::{DocModel, VerdictLabel};
use docnet::Error;

use crate::args::{EvaluateArgs, ReportArgs, ScoreArgs, SynthArgs, TrainArgs};

pub const EXIT_FLAGS: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_MODEL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn flags(message: impl Into<String>) -> Self {
        Self::new(EXIT_FLAGS, message)
    }

    fn data(err: impl std::fmt::Display) -> Self {
        Self::new(EXIT_DATA, err.to_string())
    }
}

/// Library errors raised while reading or fitting data.
impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Model(_) => EXIT_MODEL,
            Error::InvalidConfig(_) => EXIT_FLAGS,
            _ => EXIT_DATA,
        };
        CliError::new(code, err.to_string())
    }
}

fn model_error(err: Error) -> CliError {
    CliError::new(EXIT_MODEL, err.to_string())
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::flags(format!("cannot write {}: {e}", path.display())))
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        n_benign: a.benign as usize,
        n_attack: a.attack as usize,
        dims: a.dims as usize,
        shift: a.shift,
        seed: a.seed.seed,
    };
    let ds = data::synth_generate(&spec)?;
    let out = create_output(&a.out)?;
    data::write_csv(
        &ds,
        out,
        data::DEFAULT_LABEL_COLUMN,
        DEFAULT_CATEGORY_COLUMN,
    )
    .map_err(|e| CliError::flags(format!("cannot write {}: {e}", a.out.display())))?;
    println!(
        "wrote {} rows ({} benign, {} attack, {} features) to {} [seed {}]",
        ds.len(),
        spec.n_benign,
        spec.n_attack,
        spec.dims,
        a.out.display(),
        spec.seed
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let seed = a.seed.seed;
    let config = a.model_args.doc_config(seed).map_err(CliError::flags)?;
    config.validate()?;
    let ds = data::load_csv(&a.input, &a.csv.options())?;

    let (train_raw, held_out) = match a.split {
        Some(fraction) => {
            let (train, test) = data::split_benign(
                &ds,
                &SplitSpec {
                    benign_train_fraction: fraction,
                    seed,
                },
            )?;
            (train, Some(test))
        }
        None => {
            let benign = ds.benign_indices();
            if benign.is_empty() {
                return Err(CliError::data("training data has no benign rows"));
            }
            (ds.features.select_rows(&benign), None)
        }
    };

    let model = DocModel::fit_raw(&config, &train_raw, ds.schema())?;
    model
        .save(&a.model)
        .map_err(|e| CliError::flags(format!("cannot write model: {e}")))?;

    let final_loss = model.svdd.train_history.last().map(|e| e.loss);
    println!(
        "trained on {} benign rows, {} features [seed {seed}]",
        train_raw.rows(),
        ds.columns.len()
    );
    println!("epochs: {}", model.svdd.train_history.len());
    match final_loss {
        Some(l) => println!("final loss: {l:.6}"),
        None => println!("final loss: n/a (untrained network)"),
    }
    println!(
        "mean distance to center: {:.6} -> {:.6}",
        model.svdd.initial_mean_distance, model.svdd.final_mean_distance
    );
    println!(
        "threshold: {} (contamination {})",
        model.threshold, model.contamination
    );

    if let Some(test) = held_out {
        let scores = model.score_batch(&test.features)?;
        let preds: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(model.verdict(s).label == VerdictLabel::Anomaly))
            .collect();
        let m = eval::metrics(&eval::confusion(&test.labels, &preds)?);
        println!(
            "held-out ({} rows, {} attack): accuracy {:.2}  DR {:.2}  FAR {:.2}",
            test.len(),
            test.labels.iter().filter(|&&l| l == ATTACK).count(),
            m.accuracy,
            m.dr,
            m.far
        );
    }
    println!("model written to {}", a.model.display());
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<(), CliError> {
    let model = DocModel::load(&a.model).map_err(model_error)?;
    let file = File::open(&a.input)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", a.input.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(io::BufReader::new(file));
    let header = rdr.headers().map_err(CliError::data)?.clone();
    if header.is_empty() {
        return Err(CliError::data("input CSV has no header row"));
    }
    let layout = ColumnLayout::resolve(&header, &a.csv.options(), false)?;
    model
        .check_schema(&Schema::new(layout.feature_names.clone()))
        .map_err(|e| CliError::new(EXIT_MODEL, e.to_string()))?;

    let stdout = io::stdout();
    let mut wtr = csv::Writer::from_writer(BufWriter::new(stdout.lock()));
    let mut out_header = header.clone();
    out_header.push_field("score");
    out_header.push_field("verdict");
    wtr.write_record(&out_header).map_err(output_error)?;

    let mut record = csv::StringRecord::new();
    let mut row = Vec::with_capacity(layout.feature_idx.len());
    let mut line = 0usize;
    let mut flagged = 0usize;
    while rdr.read_record(&mut record).map_err(CliError::data)? {
        line += 1;
        layout
            .parse_features(&record, line, &mut row)
            .map_err(CliError::data)?;
        let verdict = model.classify(&row)?;
        if verdict.label == VerdictLabel::Anomaly {
            flagged += 1;
        }
        record.push_field(&verdict.score.to_string());
        record.push_field(verdict.label.as_str());
        if let Err(e) = wtr.write_record(&record) {
            return closed_pipe_ok(e);
        }
    }
    if let Err(e) = wtr.flush() {
        return closed_pipe_ok(e.into());
    }
    eprintln!("scored {line} rows, {flagged} flagged as anomaly");
    Ok(())
}

fn is_broken_pipe(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe)
}

fn output_error(e: csv::Error) -> CliError {
    CliError::flags(format!("cannot write output: {e}"))
}

/// A downstream reader that stops early (`| head`) is not an error.
fn closed_pipe_ok(e: csv::Error) -> Result<(), CliError> {
    if is_broken_pipe(&e) {
        Ok(())
    } else {
        Err(output_error(e))
    }
}

const CAVEAT: &str =
    "note: detector hyperparameters are toolkit defaults; figures on full-size NetFlow \
benchmark datasets depend on them and are not expected to match externally reported results";

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let seed = a.seed.seed;
    let config = EvalConfig {
        protocol: a.protocol,
        k: a.k as usize,
        holdout_fraction: a.holdout_fraction,
        contamination: a.model_args.contamination,
        seed,
        doc: a.model_args.doc_config(seed).map_err(CliError::flags)?,
        pca: PcaConfig {
            variance: a.pca_variance,
            components: None,
        },
    };
    config.validate()?;
    let mut detectors = a.detectors.clone();
    detectors.dedup();

    let ds = data::load_csv(&a.input, &a.csv.options())?;
    let started = Instant::now();
    let suite = eval::evaluate(&ds, &detectors, &config)?;
    let elapsed = started.elapsed().as_secs_f64();
    let suite = if a.timing {
        suite
    } else {
        suite.without_timing()
    };

    let table = suite.to_table();
    print!("{table}");
    eprintln!("{CAVEAT}");
    eprintln!("evaluation took {elapsed:.2}s");

    if let Some(path) = &a.out_json {
        let json = suite.to_json()?;
        let mut w = create_output(path)?;
        writeln!(w, "{json}")
            .map_err(|e| CliError::flags(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &a.out_table {
        let mut w = create_output(path)?;
        w.write_all(table.as_bytes())
            .map_err(|e| CliError::flags(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", a.input.display())))?;
    let suite: EvalSuite = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("not an evaluation report: {e}")))?;
    match a.format.as_str() {
        "json" => println!("{}", suite.to_json()?),
        _ => print!("{}", suite.to_table()),
    }
    Ok(())
}
