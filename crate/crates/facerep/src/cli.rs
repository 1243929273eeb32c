//! The `facerep` command line: `forge`, `align`, `train`, `extract`, `eval`
//! and `synth`. Exit codes are 0 on success, 1 for usage errors, 2 for bad or
//! missing data and 3 for numerical failures.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use facerep_core::eval::{
    eval_blufr, run_scheme, BlufrSettings, BlufrTrial, LabeledSet, PairSpec, Protocol, Retain, Scheme, SchemeConfig,
    SchemeReport, VideoPair,
};
use facerep_core::faceproc::{
    align, mirror, mirror_manifest, synth_pairs, synth_world, AlignConfig, FaceRecord, LandmarkPair, Manifest,
};
use facerep_core::forge::{annotated_world, run_pipeline, AnnotatedWorldConfig, ForgeConfig};
use facerep_core::network::BlockConfig;
use facerep_core::{BatchExecutor, Mode, NetworkSpec};

use crate::checkpoint;
use crate::driver::{checkpoint_path, load_crops, train_run, DriverOptions};
use crate::error::{Error, Result};
use crate::executor::RayonExecutor;
use crate::formats::{
    format_blufr, format_embeddings, format_manifest, format_pairs, format_photos, format_seeds, parse_aggregation,
    parse_blufr, parse_embeddings, parse_forge_config, parse_manifest, parse_names, parse_pairs, parse_photos,
    parse_schedule, parse_seeds, parse_spec, parse_video, read_gray, strip_extension, write_pgm, Embeddings,
    ManifestFile, PairRef, TrialRef,
};

#[derive(Debug, Parser)]
#[command(name = "facerep", version, about = "Face representation toolkit", propagate_version = true)]
pub struct Cli {
    /// Seed for every stochastic stage; overrides the schedule's seed in `train`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign tagged faces to identities and write a training manifest.
    Forge(ForgeArgs),
    /// Align and crop the faces of a manifest.
    Align(AlignArgs),
    /// Train a network on an aligned manifest.
    Train(TrainArgs),
    /// Write the representation of every face of an aligned manifest.
    Extract(ExtractArgs),
    /// Evaluate embeddings under a protocol.
    Eval(EvalArgs),
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct ForgeArgs {
    /// Photos as JSON lines.
    #[arg(long)]
    pub photos: PathBuf,
    /// Celebrity seed embeddings as JSON lines.
    #[arg(long)]
    pub seeds: PathBuf,
    /// Output manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report here (it always goes to stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Names already present in an external benchmark, one per line.
    #[arg(long)]
    pub external_names: Option<PathBuf>,
    /// Settings file of key = value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Minimum similarity for a face to match a seed.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Combination of similarities to several seeds: max or mean.
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Subjects with fewer faces are dropped.
    #[arg(long)]
    pub min_images: Option<usize>,
    /// Largest edit distance counted as a name collision.
    #[arg(long)]
    pub max_distance: Option<usize>,
    /// Number of weakest assignments listed for review.
    #[arg(long)]
    pub report_lowest: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Manifest with source-image landmarks.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory the manifest paths are relative to (default: the manifest's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Output directory for crops and `manifest.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Crop side in pixels; landmark positions scale with it.
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    /// Add a horizontally flipped copy of every record.
    #[arg(long)]
    pub mirror: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Aligned manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory the manifest paths are relative to (default: the manifest's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Output directory for checkpoints and the log.
    #[arg(long)]
    pub out: PathBuf,
    /// Network spec file (default: the 11-layer network sized to the crops and subjects).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Schedule file of key = value lines.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Total epochs, overriding the schedule.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Epochs between checkpoints.
    #[arg(long, default_value_t = 1)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Aligned manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory the manifest paths are relative to (default: the manifest's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Output embedding file.
    #[arg(long)]
    pub out: PathBuf,
    /// Average each representation with that of the flipped crop.
    #[arg(long)]
    pub fuse_mirror: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolKind {
    Pairs,
    Blufr,
    Video,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Embeddings of the protocol images.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Protocol list file.
    #[arg(long)]
    pub list: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolKind::Pairs)]
    pub protocol: ProtocolKind,
    /// Schemes to run, A to E; repeat for several rows.
    #[arg(long, default_values_t = vec!["A".to_string()])]
    pub scheme: Vec<String>,
    /// Manifest giving each embedding id its subject (default: the id's directory).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// External embeddings fitted by schemes B and C.
    #[arg(long)]
    pub fit_embeddings: Option<PathBuf>,
    /// Manifest giving the external embeddings their subjects (default: the id's directory).
    #[arg(long)]
    pub fit_manifest: Option<PathBuf>,
    /// Keep exactly this many PCA dimensions.
    #[arg(long, conflicts_with = "pca_variance")]
    pub pca_dim: Option<usize>,
    /// Keep the fewest PCA dimensions explaining this fraction of variance (default 0.95).
    #[arg(long)]
    pub pca_variance: Option<f64>,
    /// False accept rate for BLUFR verification.
    #[arg(long, default_value_t = 0.001)]
    pub vr_far: f64,
    /// False accept rate for BLUFR open-set identification.
    #[arg(long, default_value_t = 0.01)]
    pub dir_far: f64,
    /// Rank for BLUFR open-set identification.
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Source images, a raw manifest and pair lists of a synthetic face world.
    Faces(SynthFacesArgs),
    /// Tagged photos and seeds of a synthetic celebrity world.
    Photos(SynthPhotosArgs),
}

#[derive(Debug, Args)]
pub struct SynthFacesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 40)]
    pub per_subject: usize,
    /// Pairs per fold in the generated `pairs.txt` (half genuine).
    #[arg(long, default_value_t = 20)]
    pub pairs_per_fold: usize,
}

#[derive(Debug, Args)]
pub struct SynthPhotosArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub identities: usize,
    #[arg(long, default_value_t = 1200)]
    pub photos: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let exec = RayonExecutor::new(cli.threads).map_err(|e| Error::Data(format!("thread pool: {e}")))?;
    let seed = cli.seed;
    match cli.command {
        Command::Forge(a) => cmd_forge(a),
        Command::Align(a) => cmd_align(a, &exec),
        Command::Train(a) => cmd_train(a, seed, &exec),
        Command::Extract(a) => cmd_extract(a, &exec),
        Command::Eval(a) => cmd_eval(a, &exec),
        Command::Synth(SynthCommand::Faces(a)) => cmd_synth_faces(a, seed.unwrap_or(0)),
        Command::Synth(SynthCommand::Photos(a)) => cmd_synth_photos(a, seed.unwrap_or(0)),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::io(path))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, text).map_err(Error::io(path))
}

fn read_manifest(path: &Path) -> Result<ManifestFile> {
    let file = parse_manifest(&read(path)?).map_err(Error::parse(path))?;
    for (line, p) in &file.rejected {
        log::warn!("{}:{line}: {p}: landmarks coincide; record skipped", path.display());
    }
    Ok(file)
}

fn image_root(manifest: &Path, images: Option<PathBuf>) -> PathBuf {
    images.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

/// Manifest path made safe to join under an output directory.
fn relative(path: &str) -> PathBuf {
    Path::new(path)
        .components()
        .filter_map(|c| match c {
            Component::Normal(p) => Some(p),
            _ => None,
        })
        .collect()
}

fn cmd_forge(a: ForgeArgs) -> Result<()> {
    let photos_text = read(&a.photos)?;
    let seeds_text = read(&a.seeds)?;
    let mut config = ForgeConfig::default();
    if let Some(p) = &a.config {
        config = parse_forge_config(&read(p)?, config).map_err(Error::parse(p))?;
    }
    if let Some(p) = &a.external_names {
        config.external_names = parse_names(&read(p)?);
    }
    if let Some(t) = a.threshold {
        config.threshold = t;
    }
    if let Some(s) = &a.aggregation {
        config.aggregation = parse_aggregation(s).map_err(Error::Data)?;
    }
    if let Some(m) = a.min_images {
        config.min_images = m;
    }
    if let Some(d) = a.max_distance {
        config.max_distance = d;
    }
    if let Some(r) = a.report_lowest {
        config.report_lowest = r;
    }
    let photos = parse_photos(&photos_text).map_err(Error::parse(&a.photos))?;
    let seeds = parse_seeds(&seeds_text).map_err(Error::parse(&a.seeds))?;
    if photos.is_empty() {
        log::warn!("{}: no photos; writing an empty manifest", a.photos.display());
    }
    if seeds.is_empty() {
        log::warn!("{}: no celebrity seeds; no face can be assigned", a.seeds.display());
    }
    let out = run_pipeline(&photos, seeds, &config)?;
    write(&a.out, &format_manifest(&out.manifest))?;
    let report = out.report.to_string();
    print!("{report}");
    if let Some(p) = &a.report {
        let mut text = report;
        for id in &out.report.removed_by_filter {
            let _ = writeln!(text, "removed (too few faces): {id}");
        }
        for id in &out.report.removed_by_dedup {
            let _ = writeln!(text, "removed (name collision): {id}");
        }
        write(p, &text)?;
    }
    Ok(())
}

fn cmd_align<X: BatchExecutor>(a: AlignArgs, exec: &X) -> Result<()> {
    let file = read_manifest(&a.manifest)?;
    let root = image_root(&a.manifest, a.images);
    let canonical = AlignConfig::default().scaled(a.size);
    canonical.validate()?;

    // One crop per distinct (path, landmarks); a photo showing several faces
    // yields numbered crops.
    let mut by_path: BTreeMap<&str, Vec<LandmarkPair>> = BTreeMap::new();
    for r in file.manifest.records() {
        let v = by_path.entry(&r.path).or_default();
        if !v.contains(&r.landmarks) {
            v.push(r.landmarks);
        }
    }
    let mut jobs: Vec<(&str, LandmarkPair, PathBuf)> = Vec::new();
    for (path, lms) in &by_path {
        let stem = relative(strip_extension(path));
        for (k, l) in lms.iter().enumerate() {
            let name = if lms.len() == 1 {
                stem.with_extension("pgm")
            } else {
                PathBuf::from(format!("{}-{k}.pgm", stem.display()))
            };
            jobs.push((path, *l, name));
        }
    }
    let results = exec.map(jobs.len(), |i| {
        let (path, landmarks, _) = &jobs[i];
        let src = root.join(path);
        read_gray(&src)
            .map_err(|e| format!("{}: {e}", src.display()))
            .and_then(|img| align(&img, landmarks, &canonical).map_err(|e| format!("{path}: {e}")))
    });
    let mut crop_of: HashMap<(&str, [u64; 4]), &Path> = HashMap::new();
    let key = |l: &LandmarkPair| [l.p1.x, l.p1.y, l.p2.x, l.p2.y].map(f64::to_bits);
    let mut written = 0;
    for ((path, l, name), res) in jobs.iter().zip(results) {
        match res {
            Ok(crop) => {
                let dest = a.out.join(name);
                if let Some(dir) = dest.parent() {
                    fs::create_dir_all(dir).map_err(Error::io(dir))?;
                }
                write_pgm(&dest, &crop).map_err(|source| Error::Image { path: dest, source })?;
                crop_of.insert((path, key(l)), name);
                written += 1;
            }
            Err(msg) => log::warn!("{msg}; record skipped"),
        }
    }
    let mut skipped = file.rejected.len();
    let mut records = Vec::new();
    for r in file.manifest.records() {
        match crop_of.get(&(r.path.as_str(), key(&r.landmarks))) {
            Some(name) => records.push(FaceRecord {
                path: name.to_string_lossy().replace('\\', "/"),
                subject: r.subject.clone(),
                landmarks: LandmarkPair::new(canonical.q1, canonical.q2)?,
                mirrored: r.mirrored,
            }),
            None => skipped += 1,
        }
    }
    let mut manifest = Manifest::new(records, canonical);
    if a.mirror {
        manifest = mirror_manifest(&manifest);
    }
    write(&a.out.join("manifest.tsv"), &format_manifest(&manifest))?;
    println!("records\t{}", manifest.len());
    println!("crops written\t{written}");
    println!("records skipped\t{skipped}");
    Ok(())
}

fn cmd_train<X: BatchExecutor>(a: TrainArgs, seed: Option<u64>, exec: &X) -> Result<()> {
    let file = read_manifest(&a.manifest)?;
    let manifest = file.manifest;
    let mut schedule = match &a.schedule {
        Some(p) => parse_schedule(&read(p)?).map_err(Error::parse(p))?,
        None => Default::default(),
    };
    if let Some(e) = a.epochs {
        schedule.epochs = e;
    }
    if let Some(s) = seed {
        schedule.seed = s;
    }
    let subjects = manifest.subjects().len();
    let spec = match &a.spec {
        Some(p) => parse_spec(&read(p)?).map_err(Error::parse(p))?,
        None => NetworkSpec::from_blocks(&BlockConfig {
            input_side: manifest.canonical.size,
            class_count: subjects.max(1),
            ..BlockConfig::canonical()
        })?,
    };
    if manifest.is_empty() {
        return Err(Error::Data(format!("{}: no training records", a.manifest.display())));
    }
    if spec.class_count != subjects {
        return Err(Error::Data(format!(
            "network has {} classes but the manifest lists {subjects} subjects",
            spec.class_count
        )));
    }
    let root = image_root(&a.manifest, a.images);
    let (images, labels) = load_crops(&manifest, &root)?;
    let options = DriverOptions {
        resume: a.resume,
        checkpoint_every: a.checkpoint_every,
    };
    let outcome = train_run(&images, &labels, &spec, &schedule, &a.out, options, exec)?;
    println!("{}", checkpoint_path(&a.out, outcome.state.epochs_done).display());
    Ok(())
}

/// Embedding id of a manifest record; flipped copies get a `#mirror` suffix.
pub fn record_id(r: &FaceRecord) -> String {
    if r.mirrored {
        format!("{}#mirror", r.path)
    } else {
        r.path.clone()
    }
}

fn cmd_extract<X: BatchExecutor>(a: ExtractArgs, exec: &X) -> Result<()> {
    let mut net = checkpoint::load_network(&a.checkpoint).map_err(|source| Error::Checkpoint {
        path: a.checkpoint.clone(),
        source,
    })?;
    net.set_mode(Mode::Infer);
    let file = read_manifest(&a.manifest)?;
    let root = image_root(&a.manifest, a.images);
    let records = file.manifest.records();
    let vectors = exec
        .map(records.len(), |i| -> Result<Vec<f64>> {
            let r = &records[i];
            let path = root.join(&r.path);
            let img = read_gray(&path).map_err(|source| Error::Image { path, source })?;
            let img = if r.mirrored { mirror(&img) } else { img };
            let t = img.to_tensor().map_err(|e| Error::Data(e.to_string()))?;
            if t.shape() != net.spec.input_shape {
                return Err(Error::Data(format!(
                    "{}: crop shape {:?} does not match network input {:?}",
                    r.path,
                    t.shape(),
                    net.spec.input_shape
                )));
            }
            let mut v = net.embed(&t)?;
            if a.fuse_mirror {
                let f = net.embed(&mirror(&img).to_tensor().map_err(|e| Error::Data(e.to_string()))?)?;
                for (x, y) in v.iter_mut().zip(f) {
                    *x = 0.5 * (*x + y);
                }
            }
            Ok(v)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let e = Embeddings {
        ids: records.iter().map(record_id).collect(),
        vectors,
    };
    write(&a.out, &format_embeddings(&e))?;
    Ok(())
}

/// Subject label of every embedding row.
fn subject_labels(e: &Embeddings, manifest: Option<&Path>) -> Result<Vec<usize>> {
    let names: Vec<String> = match manifest {
        Some(p) => {
            let file = read_manifest(p)?;
            let mut by_id: HashMap<String, &str> = HashMap::new();
            for r in file.manifest.records() {
                by_id.insert(record_id(r), &r.subject);
                by_id.entry(strip_extension(&r.path).to_string()).or_insert(&r.subject);
            }
            e.ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .or_else(|| by_id.get(strip_extension(id)))
                        .map(|s| s.to_string())
                        .ok_or_else(|| Error::Data(format!("{}: no record for embedding {id}", p.display())))
                })
                .collect::<Result<_>>()?
        }
        None => e
            .ids
            .iter()
            .map(|id| id.rsplit_once('/').map_or(id.as_str(), |(d, _)| d).to_string())
            .collect(),
    };
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    Ok(names
        .iter()
        .map(|n| sorted.binary_search(n).expect("present"))
        .collect())
}

fn lookup(index: &HashMap<String, usize>, id: &str, list: &Path) -> Result<usize> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| Error::Data(format!("{}: id {id} has no embedding", list.display())))
}

fn load_embeddings(path: &Path) -> Result<(Embeddings, HashMap<String, usize>)> {
    let e = parse_embeddings(&read(path)?).map_err(Error::parse(path))?;
    if e.is_empty() {
        return Err(Error::Data(format!("{}: no embeddings", path.display())));
    }
    let index = e.index().map_err(|m| Error::Data(format!("{}: {m}", path.display())))?;
    Ok((e, index))
}

fn percent(x: f64) -> f64 {
    100.0 * x
}

fn cmd_eval<X: BatchExecutor>(a: EvalArgs, exec: &X) -> Result<()> {
    let schemes: Vec<Scheme> = a.scheme.iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>()?;
    let (emb, index) = load_embeddings(&a.embeddings)?;
    let labels = subject_labels(&emb, a.manifest.as_deref())?;
    let data = LabeledSet::new(&emb.vectors, &labels)?;

    let external = match &a.fit_embeddings {
        Some(p) => {
            let (e, _) = load_embeddings(p)?;
            let l = subject_labels(&e, a.fit_manifest.as_deref())?;
            Some((e, l))
        }
        None => None,
    };
    let external_set = match &external {
        Some((e, l)) => Some(LabeledSet::new(&e.vectors, l)?),
        None => None,
    };

    let mut config = SchemeConfig::default();
    if let Some(d) = a.pca_dim {
        config.pca = Retain::Dim(d);
    }
    if let Some(v) = a.pca_variance {
        config.pca = Retain::Variance(v);
    }

    let list_text = read(&a.list)?;
    let protocol = match a.protocol {
        ProtocolKind::Pairs => {
            let folds = parse_pairs(&list_text).map_err(Error::parse(&a.list))?;
            Protocol::Pairs(
                folds
                    .iter()
                    .map(|f| {
                        f.iter()
                            .map(|p: &PairRef| {
                                Ok(PairSpec {
                                    a: lookup(&index, &p.a, &a.list)?,
                                    b: lookup(&index, &p.b, &a.list)?,
                                    genuine: p.genuine,
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?,
            )
        }
        ProtocolKind::Video => {
            let folds = parse_video(&list_text).map_err(Error::parse(&a.list))?;
            let ids = |v: &[String]| v.iter().map(|id| lookup(&index, id, &a.list)).collect::<Result<Vec<_>>>();
            Protocol::Video(
                folds
                    .iter()
                    .map(|f| {
                        f.iter()
                            .map(|v| {
                                Ok(VideoPair {
                                    a: ids(&v.a)?,
                                    b: ids(&v.b)?,
                                    genuine: v.genuine,
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?,
            )
        }
        ProtocolKind::Blufr => {
            let trials = parse_blufr(&list_text).map_err(Error::parse(&a.list))?;
            let ids = |v: &[String]| v.iter().map(|id| lookup(&index, id, &a.list)).collect::<Result<Vec<_>>>();
            Protocol::Blufr(
                trials
                    .iter()
                    .map(|t: &TrialRef| {
                        Ok(BlufrTrial {
                            train: ids(&t.train)?,
                            test: ids(&t.test)?,
                            gallery: ids(&t.gallery)?,
                            probes: ids(&t.probes)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            )
        }
    };

    let settings = BlufrSettings {
        verification_far: a.vr_far,
        identification_far: a.dir_far,
        rank: a.rank,
    };
    let mut out = String::new();
    for (k, &scheme) in schemes.iter().enumerate() {
        let name = format!("{scheme}: {}", scheme.describe());
        let report = match &protocol {
            Protocol::Blufr(t) => {
                SchemeReport::Blufr(eval_blufr(scheme, data, t, external_set, &config, &settings, exec)?)
            }
            p => run_scheme(scheme, data, p, external_set, &config, exec)?,
        };
        match report {
            SchemeReport::Folds(f) => {
                if k == 0 {
                    let _ = writeln!(out, "{:<40}Accuracy±SE", "Method");
                }
                let _ = writeln!(
                    out,
                    "{name:<40}{:.2}±{:.2}",
                    percent(f.mean),
                    percent(f.standard_error)
                );
            }
            SchemeReport::Blufr(b) => {
                if k == 0 {
                    let vr = format!("VR@FAR={}%", percent(a.vr_far));
                    let dir = format!("DIR@FAR={}% Rank={}", percent(a.dir_far), a.rank);
                    let _ = writeln!(out, "{:<40}{vr:<20}{dir}", "Method");
                }
                let vr = format!("{:.2}", percent(b.verification.reported));
                let _ = writeln!(out, "{name:<40}{vr:<20}{:.2}", percent(b.identification.reported));
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn cmd_synth_faces(a: SynthFacesArgs, seed: u64) -> Result<()> {
    let world = synth_world(a.subjects, a.per_subject, seed);
    for (img, r) in world.images.iter().zip(world.manifest.records()) {
        let dest = a.out.join(&r.path);
        if let Some(dir) = dest.parent() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        write_pgm(&dest, img).map_err(|source| Error::Image { path: dest, source })?;
    }
    write(&a.out.join("manifest.tsv"), &format_manifest(&world.manifest))?;
    let ids: Vec<&str> = world.manifest.records().iter().map(|r| r.path.as_str()).collect();
    let folds: Vec<Vec<PairRef>> = synth_pairs(&world.labels, 10, a.pairs_per_fold, seed)
        .into_iter()
        .map(|f| {
            f.into_iter()
                .map(|p| PairRef {
                    a: ids[p.a].to_string(),
                    b: ids[p.b].to_string(),
                    genuine: p.genuine,
                })
                .collect()
        })
        .collect();
    write(&a.out.join("pairs.txt"), &format_pairs(&folds))?;
    // Two trials with the subject halves swapped; the test half is split
    // into gallery and probes, with some test subjects absent from the gallery.
    let trials: Vec<TrialRef> = (0..2)
        .map(|t| {
            let mut trial = TrialRef::default();
            for (k, r) in world.manifest.records().iter().enumerate() {
                let l = world.labels[k];
                if l % 2 == t {
                    trial.train.push(r.path.clone());
                } else {
                    trial.test.push(r.path.clone());
                    if (l / 2).is_multiple_of(2) && k % a.per_subject.max(1) == 0 {
                        trial.gallery.push(r.path.clone());
                    } else {
                        trial.probes.push(r.path.clone());
                    }
                }
            }
            trial
        })
        .collect();
    write(&a.out.join("blufr.txt"), &format_blufr(&trials))?;
    println!("{} images of {} subjects in {}", world.images.len(), a.subjects, a.out.display());
    Ok(())
}

fn cmd_synth_photos(a: SynthPhotosArgs, seed: u64) -> Result<()> {
    let cfg = AnnotatedWorldConfig {
        identities: a.identities,
        photos: a.photos,
        dim: a.dim,
        ..AnnotatedWorldConfig::default()
    };
    let world = annotated_world(&cfg, seed);
    write(&a.out.join("photos.jsonl"), &format_photos(&world.photos))?;
    write(&a.out.join("seeds.jsonl"), &format_seeds(&world.seeds))?;
    let mut truth = String::new();
    for ((photo, face), who) in &world.truth {
        let _ = writeln!(truth, "{photo}\t{face}\t{}", who.as_deref().unwrap_or("-"));
    }
    write(&a.out.join("truth.tsv"), &truth)?;
    println!("{} photos, {} identities in {}", world.photos.len(), world.seeds.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_for_usage() {
        assert_eq!(run(["facerep", "--help"]), 0);
        assert_eq!(run(["facerep", "eval", "--help"]), 0);
        assert_eq!(run(["facerep", "--version"]), 0);
        assert_eq!(run(["facerep", "frobnicate"]), 1);
        assert_eq!(run(["facerep", "align", "--manifest", "m", "--out", "o", "--bogus"]), 1);
        assert_eq!(run(["facerep", "align", "--manifest", "/nonexistent/m.tsv", "--out", "o"]), 2);
    }

    #[test]
    fn relative_paths_stay_inside() {
        assert_eq!(relative("/etc/../x/y.pgm"), PathBuf::from("etc/x/y.pgm"));
        assert_eq!(relative("a/./b"), PathBuf::from("a/b"));
    }
}
