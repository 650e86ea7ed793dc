use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coreset_core::analysis::{export_subset, write_report};
use coreset_core::embed::{rank_fa, rank_fd, FdParams};
use coreset_core::hybrid::{
    rank_facb, rank_kcenter, rank_lcfd, rank_random, DEFAULT_CUTOFF, DEFAULT_LAMBDA,
};
use coreset_core::ingest::{build_manifest, IngestConfig, DEFAULT_MASK_PATTERN};
use coreset_core::label::{rank_cb, rank_lc};
use coreset_core::model::validate_embedding_rows;
use coreset_core::{validate_manifest, ClassSchema, DatasetManifest, EmbeddingMatrix, Error, Ranking};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "coreset", version, about = "Rank segmentation tiles by training value and export core-sets")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "CORESET_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tile image/mask pairs and write the dataset manifest.
    Ingest(IngestArgs),
    /// Rank tiles with one method, or all eight.
    Rank(RankArgs),
    /// Kendall tau matrix, rank profile and extremes for a set of rankings.
    Analyze(AnalyzeArgs),
    /// Write the top fraction of a ranking, one tile id per line.
    Export(ExportArgs),
    /// Check a manifest and/or an embeddings file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    images: PathBuf,
    /// Mask directory; defaults to the image directory.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    classes: usize,
    /// Comma-separated class ids excluded from scoring.
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    tile_size: u32,
    /// Mask file name template, `{stem}` standing for the image stem.
    #[arg(long, default_value = DEFAULT_MASK_PATTERN)]
    mask_pattern: String,
    /// Also write each tile's image and mask crops to this directory.
    #[arg(long)]
    write_tiles: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Lc,
    Cb,
    Fd,
    Fa,
    Lcfd,
    Facb,
    Random,
    Kcenter,
    All,
}

impl Method {
    const EACH: [Method; 8] = [
        Method::Lc,
        Method::Cb,
        Method::Fd,
        Method::Fa,
        Method::Lcfd,
        Method::Facb,
        Method::Random,
        Method::Kcenter,
    ];

    fn tag(self) -> &'static str {
        match self {
            Method::Lc => "lc",
            Method::Cb => "cb",
            Method::Fd => "fd",
            Method::Fa => "fa",
            Method::Lcfd => "lcfd",
            Method::Facb => "facb",
            Method::Random => "random",
            Method::Kcenter => "kcenter",
            Method::All => "all",
        }
    }
}

#[derive(Args)]
struct RankArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    manifest: PathBuf,
    /// Embeddings (CSEM) for fd, fa, kcenter and the hybrids built on them.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.005)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, default_value_t = 256)]
    k_max: usize,
    /// LC/FD cutoff; capped at the number of tiles.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Precomputed component rankings for lcfd (lc + fd) or facb (fa + cb).
    #[arg(long)]
    from_ranking: Vec<PathBuf>,
    /// Output file, or output directory for `--method all`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory of ranking CSV files.
    #[arg(long)]
    rankings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Tiles listed at each end of the rank profile.
    #[arg(long, default_value_t = 3)]
    extremes_k: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    ranking: PathBuf,
    /// Fraction of tiles to keep, in (0, 1].
    #[arg(long)]
    budget: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() {
            EXIT_INPUT
        } else {
            match e {
                Error::InvalidParameter(_) => EXIT_USAGE,
                Error::IdMismatch(_)
                | Error::MaskValue { .. }
                | Error::DimensionMismatch { .. }
                | Error::NonFinite { .. } => EXIT_VALIDATION,
                _ => EXIT_FAILURE,
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.kind().as_str().map(String::from).unwrap_or_else(|| e.to_string());
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return report(&Failure {
                code: EXIT_USAGE,
                message: format!("{text}: {first}"),
            });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return report(&usage("--threads must be positive"));
        }
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Rank(a) => rank(a),
        Command::Analyze(a) => analyze(a),
        Command::Export(a) => export(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}

fn report(f: &Failure) -> ExitCode {
    let kind = match f.code {
        EXIT_USAGE => "usage",
        EXIT_INPUT => "input",
        EXIT_VALIDATION => "validation",
        _ => "failure",
    };
    let message = f.message.replace(['\n', '\r'], " ");
    eprintln!("coreset: error kind={kind} code={}: {message}", f.code);
    ExitCode::from(f.code)
}

fn ingest(a: IngestArgs) -> CliResult {
    let schema = ClassSchema::new(a.classes, a.ignore)?;
    let mut config = IngestConfig::new(&a.images, schema);
    if let Some(masks) = a.masks {
        config.masks_dir = masks;
    }
    config.mask_pattern = a.mask_pattern;
    config.tile_size = a.tile_size;
    config.tiles_out = a.write_tiles;
    let manifest = build_manifest(&config)?;
    manifest.write(&a.out)?;
    let degenerate = manifest.tiles.iter().filter(|t| t.degenerate).count();
    eprintln!(
        "wrote {} tiles ({degenerate} degenerate) to {}",
        manifest.len(),
        a.out.display()
    );
    Ok(())
}

struct RankInputs {
    manifest: DatasetManifest,
    embeddings: Option<EmbeddingMatrix>,
}

impl RankInputs {
    fn load(a: &RankArgs) -> CliResult<Self> {
        let manifest = DatasetManifest::read(&a.manifest)?;
        let violations = validate_manifest(&manifest);
        if let Some(v) = violations.first() {
            return Err(Failure {
                code: EXIT_VALIDATION,
                message: format!("invalid manifest ({} problems), first: {v}", violations.len()),
            });
        }
        let embeddings = match &a.embeddings {
            Some(p) => Some(EmbeddingMatrix::read(p)?.aligned_to(&manifest)?),
            None => None,
        };
        Ok(RankInputs {
            manifest,
            embeddings,
        })
    }

    fn embeddings(&self, method: Method) -> CliResult<&EmbeddingMatrix> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| usage(format!("--method {} requires --embeddings", method.tag())))
    }
}

fn fd_params(a: &RankArgs) -> FdParams {
    FdParams {
        delta: a.delta,
        patience: a.patience,
        k_max: a.k_max,
    }
}

fn lcfd(lc: &Ranking, fd: &Ranking, requested: usize) -> CliResult<Ranking> {
    let m = requested.min(fd.len());
    let mut r = rank_lcfd(lc, fd, m)?;
    if m != requested {
        r = r.with_param("m_requested", requested);
    }
    for (k, v) in &fd.params {
        if k != "k_max" && k != "m" {
            r.params.insert(format!("fd_{k}"), v.clone());
        }
    }
    Ok(r)
}

fn single(method: Method, a: &RankArgs, inputs: &RankInputs, cache: &mut Vec<Ranking>) -> CliResult<Ranking> {
    if let Some(r) = cache.iter().find(|r| r.method == method.tag()) {
        return Ok(r.clone());
    }
    let r = match method {
        Method::Lc => rank_lc(&inputs.manifest),
        Method::Cb => rank_cb(&inputs.manifest),
        Method::Fd => rank_fd(inputs.embeddings(method)?, a.seed, fd_params(a))?,
        Method::Fa => rank_fa(inputs.embeddings(method)?),
        Method::Random => rank_random(&inputs.manifest, a.seed),
        Method::Kcenter => rank_kcenter(inputs.embeddings(method)?, a.seed)?,
        Method::Lcfd => {
            let lc = single(Method::Lc, a, inputs, cache)?;
            let fd = single(Method::Fd, a, inputs, cache)?;
            lcfd(&lc, &fd, a.m)?
        }
        Method::Facb => {
            let fa = single(Method::Fa, a, inputs, cache)?;
            let cb = single(Method::Cb, a, inputs, cache)?;
            rank_facb(&fa, &cb, a.lambda)?
        }
        Method::All => unreachable!("expanded by the caller"),
    };
    cache.push(r.clone());
    Ok(r)
}

fn load_components(a: &RankArgs, inputs: &RankInputs) -> CliResult<Vec<Ranking>> {
    let ids = inputs.manifest.tile_ids();
    let mut out = Vec::new();
    for path in &a.from_ranking {
        let r = Ranking::read(path)?;
        let reference = Ranking::from_order("manifest", ids.iter().map(|s| s.to_string()).collect());
        coreset_core::model::ensure_same_ids(&reference, &r)?;
        out.push(r);
    }
    Ok(out)
}

fn rank(a: RankArgs) -> CliResult {
    let inputs = RankInputs::load(&a)?;
    let mut cache = load_components(&a, &inputs)?;
    if !a.from_ranking.is_empty() && !matches!(a.method, Method::Lcfd | Method::Facb) {
        return Err(usage("--from-ranking only applies to lcfd and facb"));
    }
    if a.method == Method::All {
        std::fs::create_dir_all(&a.out).map_err(|e| Failure::from(Error::Io {
            path: a.out.clone(),
            source: e,
        }))?;
        for m in Method::EACH {
            let r = single(m, &a, &inputs, &mut cache)?;
            r.write(a.out.join(format!("ranking_{}.csv", m.tag())))?;
        }
        return Ok(());
    }
    let r = single(a.method, &a, &inputs, &mut cache)?;
    r.write(&a.out)?;
    Ok(())
}

fn read_rankings(dir: &Path) -> CliResult<Vec<Ranking>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure {
            code: EXIT_INPUT,
            message: format!("no ranking files in {}", dir.display()),
        });
    }
    Ok(paths.iter().map(Ranking::read).collect::<Result<_, _>>()?)
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let rankings = read_rankings(&a.rankings)?;
    write_report(&rankings, a.extremes_k, &a.out)?;
    Ok(())
}

fn export(a: ExportArgs) -> CliResult {
    let ranking = Ranking::read(&a.ranking)?;
    let ids = export_subset(&ranking, a.budget)?;
    let mut text = ids.join("\n");
    text.push('\n');
    std::fs::write(&a.out, text).map_err(|e| Failure::from(Error::Io {
        path: a.out.clone(),
        source: e,
    }))?;
    Ok(())
}

fn validate(a: ValidateArgs) -> CliResult {
    if a.manifest.is_none() && a.embeddings.is_none() {
        return Err(usage("validate needs --manifest and/or --embeddings"));
    }
    let manifest = a.manifest.as_ref().map(DatasetManifest::read).transpose()?;
    let embeddings = a.embeddings.as_ref().map(EmbeddingMatrix::read).transpose()?;

    let mut problems: Vec<String> = Vec::new();
    if let Some(m) = &manifest {
        problems.extend(validate_manifest(m).iter().map(ToString::to_string));
    }
    if let (Some(m), Some(e)) = (&manifest, &embeddings) {
        problems.extend(validate_embedding_rows(m, e.rows()).iter().map(ToString::to_string));
        if problems.is_empty() {
            if let Err(err) = e.aligned_to(m) {
                problems.push(err.to_string());
            }
        }
    }
    for p in &problems {
        println!("violation: {p}");
    }
    if !problems.is_empty() {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("{} violations", problems.len()),
        });
    }
    if let Some(m) = &manifest {
        println!("ok: manifest with {} tiles, {} classes", m.len(), m.schema.num_classes);
    }
    if let Some(e) = &embeddings {
        println!("ok: embeddings {} x {}", e.rows(), e.dim());
    }
    Ok(())
}
