use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metabridge_core::articulatus::{emit_articulatus, parse_articulatus, ArticulatusOptions};
use metabridge_core::crosswalk::{crosswalk_neb_to_ojs, crosswalk_ojs_to_neb, AffiliationMap, Crosswalk};
use metabridge_core::oai::{Datestamp, DcOrder, Granularity};
use metabridge_core::ojs::{emit_ojs, emit_ojs_with, parse_ojs, OjsDocument, OjsEmitOptions};
use metabridge_core::store::{Store, StoreSnapshot, UpsertOutcome};
use metabridge_core::template::{parse_template_with_sources, render_template};
use metabridge_core::{validate_for_indexing, ArticleRecord, Severity};
use metabridge_oai::http::{bind, provider_handler, HttpRequest};
use metabridge_oai::{HarvestJob, OaiClient, Provider, ProviderConfig};

mod config;

use config::Config;

const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "metabridge", version, about = "Conference metadata conversion, validation and OAI-PMH exchange")]
struct Cli {
    /// Only print results and errors; no warnings or request logs.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// TOML configuration file (lowest precedence, below flags and environment).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a template file into OJS native import XML.
    Template {
        input: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Convert between OJS native XML and Articulatus XML.
    Convert {
        #[arg(long, value_enum)]
        from: XmlFormat,
        #[arg(long, value_enum)]
        to: XmlFormat,
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// `email-or-surname = organisation` lines used to fill in orgName.
        #[arg(long, value_name = "FILE")]
        affiliations: Option<PathBuf>,
    },
    /// Harvest an OAI-PMH endpoint into a store.
    Harvest(HarvestArgs),
    /// Serve a store over OAI-PMH and RSS until interrupted.
    Serve(ServeArgs),
    /// Check records against the indexing requirements.
    Validate {
        input: PathBuf,
        /// Input format; guessed from the content when absent.
        #[arg(long, value_enum)]
        format: Option<InputFormat>,
    },
    /// Inspect or edit a store.
    Store {
        #[command(flatten)]
        store: StoreArg,
        #[command(subcommand)]
        command: StoreCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum XmlFormat {
    /// OJS native XML
    Ojs,
    /// Articulatus XML for the national electronic library
    Neb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Ojs,
    Neb,
    Template,
}

#[derive(Debug, Args)]
struct StoreArg {
    /// Store directory. Env: METABRIDGE_STORE; config: `store`.
    #[arg(long, env = "METABRIDGE_STORE", global = true, value_name = "DIR")]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HarvestArgs {
    /// Base URL of the OAI-PMH endpoint (plain http).
    endpoint: String,
    #[command(flatten)]
    store: StoreArg,
    /// Lower datestamp bound; defaults to the store's watermark.
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    until: Option<String>,
    /// Start from scratch even if the store has a watermark.
    #[arg(long, conflicts_with = "from")]
    full: bool,
    #[arg(long)]
    set: Option<String>,
    /// Metadata prefix: oai_dc or ojs_native. Config: `harvest.prefix`.
    #[arg(long)]
    prefix: Option<String>,
    /// Retries per request. Config: `harvest.retries`.
    #[arg(long)]
    retries: Option<u32>,
    /// Pause between page requests. Config: `harvest.delay_ms`.
    #[arg(long, value_name = "MS")]
    delay_ms: Option<u64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    store: StoreArg,
    /// Port; 0 picks a free one. Env: METABRIDGE_PORT; config: `serve.port`.
    #[arg(long, env = "METABRIDGE_PORT")]
    port: Option<u16>,
    /// Listen address. Config: `serve.bind`.
    #[arg(long)]
    bind: Option<String>,
    /// Repository name. Config: `serve.name`.
    #[arg(long)]
    name: Option<String>,
    /// Public endpoint URL, when behind a proxy. Config: `serve.base_url`.
    #[arg(long)]
    base_url: Option<String>,
    /// Records per list page. Config: `serve.page_size`.
    #[arg(long)]
    page_size: Option<usize>,
    /// Datestamp granularity: day or second. Config: `serve.granularity`.
    #[arg(long)]
    granularity: Option<String>,
    /// Config: `serve.admin_email`.
    #[arg(long)]
    admin_email: Option<String>,
}

#[derive(Debug, Subcommand)]
enum StoreCommand {
    /// One line per record: identifier, datestamp, A(live) or D(deleted).
    List,
    /// Print one record.
    Show {
        identifier: String,
        #[arg(long, value_enum, default_value = "ojs")]
        format: InputFormat,
    },
    /// Replace a record by a deletion marker.
    Delete { identifier: String },
    /// Add or update records from OJS, Articulatus or template files.
    Import {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<InputFormat>,
    },
}

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    /// Validation found error-severity problems; the report is already out.
    Findings,
    Format(String),
    Network(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Findings => 1,
            Failure::Format(_) => 2,
            Failure::Network(_) => 3,
            Failure::Usage(_) => 4,
        }
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    quiet: bool,
    config: Config,
}

impl Ctx {
    fn note(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn store_dir(&self, arg: &StoreArg) -> Result<PathBuf, Failure> {
        arg.store
            .clone()
            .or_else(|| self.config.store.clone())
            .ok_or_else(|| Failure::Usage("no store directory: pass --store or set METABRIDGE_STORE".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let config = match &cli.config {
        Some(p) => match Config::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: config {e}");
                return ExitCode::from(4);
            }
        },
        None => Config::default(),
    };
    let ctx = Ctx {
        quiet: cli.quiet,
        config,
    };
    match run(&ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Findings => {}
                Failure::Format(m) | Failure::Network(m) | Failure::Usage(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(ctx: &Ctx, command: Command) -> Outcome {
    match command {
        Command::Template { input, out } => cmd_template(ctx, &input, out.as_deref()),
        Command::Convert {
            from,
            to,
            input,
            out,
            affiliations,
        } => cmd_convert(ctx, from, to, &input, out.as_deref(), affiliations.as_deref()),
        Command::Harvest(args) => cmd_harvest(ctx, args),
        Command::Serve(args) => cmd_serve(ctx, args),
        Command::Validate { input, format } => cmd_validate(ctx, &input, format),
        Command::Store { store, command } => cmd_store(ctx, &ctx.store_dir(&store)?, command),
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Outcome {
    match out {
        Some(p) => write_atomic(p, bytes).map_err(|e| Failure::Format(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Format(format!("stdout: {e}"))),
    }
}

fn load_template(path: &Path) -> Result<ArticleRecord, Failure> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::Format(format!("{}: not UTF-8", path.display())))?;
    let parsed = parse_template_with_sources(&text).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))?;
    let mut record = parsed.record;
    let base = path.parent().unwrap_or(Path::new(""));
    for (galley, source) in record.galleys.iter_mut().zip(&parsed.galley_sources) {
        let file = base.join(source);
        galley.payload = std::fs::read(&file)
            .map_err(|e| Failure::Format(format!("galley file {}: {e}", file.display())))?;
    }
    Ok(record)
}

fn sniff(bytes: &[u8]) -> InputFormat {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(64 * 1024)]);
    if !text.trim_start_matches('\u{feff}').trim_start().starts_with('<') {
        InputFormat::Template
    } else if text.contains("<artTitles") || text.contains("<individInfo") {
        InputFormat::Neb
    } else {
        InputFormat::Ojs
    }
}

fn read_records(path: &Path, format: Option<InputFormat>) -> Result<Vec<ArticleRecord>, Failure> {
    let bytes = read_input(path)?;
    let format_err = |e: &dyn std::fmt::Display| Failure::Format(format!("{}: {e}", path.display()));
    match format.unwrap_or_else(|| sniff(&bytes)) {
        InputFormat::Template => Ok(vec![load_template(path)?]),
        InputFormat::Ojs => Ok(parse_ojs(&bytes).map_err(|e| format_err(&e))?.records),
        InputFormat::Neb => parse_articulatus(&bytes).map_err(|e| format_err(&e)),
    }
}

fn cmd_template(ctx: &Ctx, input: &Path, out: Option<&Path>) -> Outcome {
    let record = load_template(input)?;
    for f in validate_for_indexing(&record).findings {
        ctx.note(format!("{}: {} {}: {}", input.display(), f.severity, f.code, f.message));
    }
    let xml = emit_ojs(&OjsDocument::single(record)).map_err(|e| Failure::Format(e.to_string()))?;
    write_output(out, &xml)
}

fn cmd_convert(
    ctx: &Ctx,
    from: XmlFormat,
    to: XmlFormat,
    input: &Path,
    out: Option<&Path>,
    affiliations: Option<&Path>,
) -> Outcome {
    if from == to {
        return Err(Failure::Usage(format!("--from and --to are both `{}`", format_name(from))));
    }
    let bytes = read_input(input)?;
    let result = match from {
        XmlFormat::Ojs => {
            let mut crosswalk = Crosswalk::ojs_to_neb();
            if let Some(p) = affiliations {
                let text = String::from_utf8(read_input(p)?)
                    .map_err(|_| Failure::Format(format!("{}: not UTF-8", p.display())))?;
                crosswalk.affiliations =
                    AffiliationMap::parse(&text).map_err(|e| Failure::Format(format!("{}: {e}", p.display())))?;
            }
            crosswalk_ojs_to_neb(&bytes, &crosswalk)
        }
        XmlFormat::Neb => {
            if affiliations.is_some() {
                return Err(Failure::Usage("--affiliations only applies to --from ojs".into()));
            }
            crosswalk_neb_to_ojs(&bytes, &Crosswalk::neb_to_ojs())
        }
    }
    .map_err(|e| Failure::Format(format!("{}: {e}", input.display())))?;
    for w in &result.warnings {
        ctx.note(format!("warning: {w}"));
    }
    write_output(out, &result.xml)?;
    // The loss report is the command's summary; keep stdout clean for XML.
    for loss in &result.losses {
        if out.is_some() {
            println!("loss: {loss}");
        } else {
            ctx.note(format!("loss: {loss}"));
        }
    }
    Ok(())
}

fn format_name(f: XmlFormat) -> &'static str {
    match f {
        XmlFormat::Ojs => "ojs",
        XmlFormat::Neb => "neb",
    }
}

fn parse_stamp(flag: &str, text: &str) -> Result<Datestamp, Failure> {
    Datestamp::parse(text).map_err(|e| Failure::Usage(format!("--{flag}: {e}")))
}

fn cmd_harvest(ctx: &Ctx, args: HarvestArgs) -> Outcome {
    let dir = ctx.store_dir(&args.store)?;
    let cfg = &ctx.config.harvest;
    let mut store = Store::open(&dir).map_err(|e| Failure::Format(e.to_string()))?;
    let mut job = HarvestJob::new(args.endpoint);
    job.metadata_prefix = args
        .prefix
        .or_else(|| cfg.prefix.clone())
        .unwrap_or_else(|| "oai_dc".into());
    job.set_spec = args.set;
    job.until = args.until.as_deref().map(|u| parse_stamp("until", u)).transpose()?;
    job.from = match args.from.as_deref() {
        Some(f) => Some(parse_stamp("from", f)?),
        None if args.full => None,
        None => store.watermark(),
    };
    if let Some(n) = args.retries.or(cfg.retries) {
        job.retry_budget = n;
    }
    if let Some(ms) = args.delay_ms.or(cfg.delay_ms) {
        job.politeness_delay = Duration::from_millis(ms);
    }
    job.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(f) = job.from {
        ctx.note(format!("harvesting changes since {f}"));
    }
    let summary = OaiClient::new()
        .harvest_into_store(&job, &mut store)
        .map_err(|e| Failure::Format(e.to_string()))?;
    println!(
        "fetched={} added={} updated={} deleted={} unchanged={} pages={}",
        summary.fetched, summary.added, summary.updated, summary.deleted, summary.unchanged, summary.pages
    );
    match summary.errors.as_slice() {
        [] => Ok(()),
        [only] => Err(Failure::Network(only.clone())),
        [first, rest @ ..] => {
            for e in rest {
                ctx.note(format!("error: {e}"));
            }
            Err(Failure::Network(first.clone()))
        }
    }
}

fn cmd_serve(ctx: &Ctx, args: ServeArgs) -> Outcome {
    let dir = ctx.store_dir(&args.store)?;
    let cfg = &ctx.config.serve;
    let defaults = ProviderConfig::default();
    let granularity = match args.granularity.or_else(|| cfg.granularity.clone()) {
        Some(g) => match g.as_str() {
            "day" => Granularity::Day,
            "second" => Granularity::Second,
            _ => return Err(Failure::Usage(format!("granularity `{g}`: expected day or second"))),
        },
        None => defaults.granularity,
    };
    let page_size = args.page_size.or(cfg.page_size).unwrap_or(defaults.page_size);
    if page_size == 0 {
        return Err(Failure::Usage("page size must be at least 1".into()));
    }
    // Fail early on an unreadable store rather than on the first request.
    StoreSnapshot::load(&dir).map_err(|e| Failure::Format(e.to_string()))?;

    let port = args.port.or(cfg.port).unwrap_or(DEFAULT_PORT);
    let host = args.bind.or_else(|| cfg.bind.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let bound = bind(&format!("{host}:{port}")).map_err(|e| Failure::Network(format!("{host}:{port}: {e}")))?;
    let mut config = ProviderConfig {
        repository_name: args.name.or_else(|| cfg.name.clone()).unwrap_or(defaults.repository_name),
        base_url: args.base_url.or_else(|| cfg.base_url.clone()).unwrap_or_default(),
        page_size,
        granularity,
        admin_email: args.admin_email.or_else(|| cfg.admin_email.clone()).unwrap_or(defaults.admin_email),
        dc_order: DcOrder::RusFirst,
        ..defaults
    };
    if config.base_url.is_empty() {
        config.base_url = format!("http://{}{}", bound.addr(), config.base_path);
    }
    let listening = config.base_url.clone();
    let inner = provider_handler(Arc::new(Provider::new(config, dir)));
    let quiet = ctx.quiet;
    let handler = move |req: &HttpRequest| {
        let resp = inner(req);
        if !quiet {
            let query: Vec<String> = req.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!("{} {}?{} {}", req.method, req.path, query.join("&"), resp.status);
        }
        resp
    };
    let handle = bound.start(4, Arc::new(handler));
    println!("listening on {listening}");
    let _ = std::io::stdout().flush();
    handle.join();
    Ok(())
}

fn cmd_validate(ctx: &Ctx, input: &Path, format: Option<InputFormat>) -> Outcome {
    let records = read_records(input, format)?;
    let mut errors = 0;
    let mut warnings = 0;
    for r in &records {
        let report = validate_for_indexing(r);
        for f in &report.findings {
            match f.severity {
                Severity::Error => errors += 1,
                Severity::Warning => warnings += 1,
            }
            println!("{}\t{}\t{}\t{}", r.identifier, f.severity, f.code, f.message);
        }
    }
    ctx.note(format!("{} record(s): {errors} error(s), {warnings} warning(s)", records.len()));
    if errors > 0 {
        Err(Failure::Findings)
    } else {
        Ok(())
    }
}

fn cmd_store(ctx: &Ctx, dir: &Path, command: StoreCommand) -> Outcome {
    let store_err = |e: metabridge_core::store::StoreError| Failure::Format(e.to_string());
    match command {
        StoreCommand::List => {
            let snap = StoreSnapshot::load(dir).map_err(store_err)?;
            let mut out = std::io::stdout().lock();
            for h in snap.headers() {
                let _ = writeln!(out, "{}\t{}\t{}", h.identifier, h.datestamp, if h.deleted { "D" } else { "A" });
            }
            Ok(())
        }
        StoreCommand::Show { identifier, format } => {
            let snap = StoreSnapshot::load(dir).map_err(store_err)?;
            let record = match snap.get(&identifier).map_err(store_err)? {
                Some(r) => r,
                None if snap.header(&identifier).is_some() => {
                    return Err(Failure::Usage(format!("`{identifier}` is deleted")))
                }
                None => return Err(Failure::Usage(format!("no record `{identifier}`"))),
            };
            let bytes = match format {
                InputFormat::Ojs => emit_ojs_with(&OjsDocument::single(record), OjsEmitOptions::archival())
                    .map_err(|e| Failure::Format(e.to_string()))?,
                InputFormat::Neb => {
                    emit_articulatus(&[record], &ArticulatusOptions::default())
                        .map_err(|e| Failure::Format(e.to_string()))?
                        .xml
                }
                InputFormat::Template => render_template(&record).into_bytes(),
            };
            write_output(None, &bytes)
        }
        StoreCommand::Delete { identifier } => {
            let mut store = Store::open(dir).map_err(store_err)?;
            if store.header(&identifier).is_none() {
                return Err(Failure::Usage(format!("no record `{identifier}`")));
            }
            let changed = store.mark_deleted(&identifier).map_err(store_err)?;
            println!("{}", if changed { "deleted" } else { "already deleted" });
            Ok(())
        }
        StoreCommand::Import { inputs, format } => {
            let mut store = Store::open(dir).map_err(store_err)?;
            let (mut added, mut updated, mut unchanged) = (0, 0, 0);
            for path in &inputs {
                for record in read_records(path, format)? {
                    match store.upsert(&record).map_err(store_err)? {
                        UpsertOutcome::Added => added += 1,
                        UpsertOutcome::Updated => updated += 1,
                        UpsertOutcome::Unchanged => unchanged += 1,
                    }
                }
            }
            ctx.note(format!("{} file(s) imported into {}", inputs.len(), dir.display()));
            println!("added={added} updated={updated} unchanged={unchanged}");
            Ok(())
        }
    }
}
