use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ctxret::convnet::{project_roi, rf_params};
use ctxret::encoder::{fit_pca, fit_pca_up_to};
use ctxret::eval::{
    generate_synthetic, run_eval, Databases, DatasetManifest, EncoderKind, EvalGrid, SyntheticConfig, DEFAULT_IMAGES,
};
use ctxret::pipeline::{harvest_region_macs, DescriptorIndex, Pipeline, QueryModel, QuerySpec};
use ctxret::tensor::Rect;
use ctxret::{DescriptorIndex64, Image64};

use crate::config::{PipelineArgs, Resolved};
use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "ctxret", version, about = "Context-aware query encoding for image retrieval")]
pub struct Cli {
    /// More logging (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic retrieval dataset
    GenSynthetic(GenArgs),
    /// Fit the PCA whitening model on database region vectors
    FitPca(FitPcaArgs),
    /// Encode every database image into a descriptor index
    Index(IndexArgs),
    /// Rank the index against one query
    Query(QueryArgs),
    /// mAP for each query model × encoder cell
    Eval(EvalArgs),
    /// Show where a pixel ROI lands on a layer's activation grid
    ProjectRoi(ProjectRoiArgs),
}

pub fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::FitPca(a) => fit(a),
        Command::Index(a) => index(a),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a),
        Command::ProjectRoi(a) => project(a),
    }
}

fn required(path: Option<PathBuf>, flag: &str) -> anyhow::Result<PathBuf> {
    path.ok_or_else(|| UsageError(format!("--{flag} is required")).into())
}

fn load_manifest(path: Option<PathBuf>) -> anyhow::Result<DatasetManifest> {
    let path = required(path, "manifest")?;
    DatasetManifest::load(&path).with_context(|| format!("loading manifest {}", path.display()))
}

fn load_images(manifest: &DatasetManifest) -> anyhow::Result<Vec<(String, Image64)>> {
    manifest
        .images
        .iter()
        .map(|e| {
            let img = Image64::load(&e.path).with_context(|| format!("loading {}", e.path.display()))?;
            if (img.width(), img.height()) != (e.w, e.h) {
                bail!(
                    "{} is {}x{}, manifest says {}x{}",
                    e.path.display(),
                    img.width(),
                    img.height(),
                    e.w,
                    e.h
                );
            }
            Ok((e.id.clone(), img))
        })
        .collect()
}

fn create(path: &PathBuf) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory (manifest.json and images/)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IMAGES)]
    n_images: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of queries [default: min(10, n-images / 4)]
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Leave out the companion patterns
    #[arg(long)]
    no_context: bool,
}

fn gen_synthetic(a: GenArgs) -> anyhow::Result<()> {
    let d = SyntheticConfig::default();
    let config = SyntheticConfig {
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        n_queries: a.n_queries,
        facilitatory_context: !a.no_context,
        ..d
    };
    let ds = generate_synthetic(a.seed, a.n_images, &config)?;
    let path = ds.write(&a.out).with_context(|| format!("writing dataset to {}", a.out.display()))?;
    let positives: usize = ds.manifest.queries.iter().map(|q| q.positive.len()).sum();
    let looks: usize = ds.lookalikes.values().map(Vec::len).sum();
    println!(
        "{} images, {} queries, {} positives, {} look-alikes -> {}",
        ds.manifest.images.len(),
        ds.manifest.queries.len(),
        positives,
        looks,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitPcaArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write the PCAW model
    #[arg(long)]
    out: PathBuf,
    /// Output dimension [default: input channels, reduced to the achievable rank]
    #[arg(long)]
    out_dim: Option<usize>,
}

fn fit(a: FitPcaArgs) -> anyhow::Result<()> {
    let cfg = a.pipeline.resolve()?;
    let net = cfg.network()?;
    let manifest = load_manifest(a.manifest.or(cfg.raw.manifest.clone()))?;
    let images: Vec<Image64> = load_images(&manifest)?.into_iter().map(|(_, i)| i).collect();
    let samples = harvest_region_macs(&net, &images, &cfg.pipeline.encoder)?;
    let k = net.channels_at(net.final_layer());
    let model = match a.out_dim {
        Some(d) => fit_pca(&samples, d)?,
        None => fit_pca_up_to(&samples, k)?,
    };
    let mut w = create(&a.out)?;
    model.write(&mut w)?;
    w.flush()?;
    println!(
        "{} -> {} dimensions from {} region vectors -> {}",
        model.in_dim(),
        model.out_dim(),
        samples.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Optional `build` verb; `index` and `index build` are the same
    #[arg(value_parser = ["build"], hide_possible_values = true)]
    _action: Option<String>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write the DIDX index
    #[arg(long)]
    out: Option<PathBuf>,
    /// Database-side attention on discovered salient regions
    #[arg(long)]
    db_sa: bool,
}

fn index(a: IndexArgs) -> anyhow::Result<()> {
    let cfg = a.pipeline.resolve()?;
    let out = required(a.out.or(cfg.raw.index.clone()), "out")?;
    let (net, pca) = (cfg.network()?, cfg.pca()?);
    let manifest = load_manifest(a.manifest.or(cfg.raw.manifest.clone()))?;
    let images = load_images(&manifest)?;
    let pipeline = Pipeline::new(&net, &pca, &cfg.pipeline)?;
    let index = pipeline.index_database(&images, a.db_sa)?;
    let mut w = create(&out)?;
    index.write(&mut w)?;
    w.flush()?;
    println!("{} descriptors of dimension {} -> {}", index.len(), index.dim(), out.display());
    Ok(())
}

fn read_index(path: &PathBuf) -> anyhow::Result<DescriptorIndex64> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    DescriptorIndex::read(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Query image
    #[arg(long)]
    image: PathBuf,
    /// Pixel ROI `x0,y0,x1,y1` (half-open) [default: whole image]
    #[arg(long)]
    roi: Option<Rect>,
    #[arg(long, default_value = "sa")]
    model: QueryModel,
    /// Number of results
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Print JSON instead of tab-separated lines
    #[arg(long)]
    json: bool,
}

fn query(a: QueryArgs) -> anyhow::Result<()> {
    let cfg = a.pipeline.resolve()?;
    let index = read_index(&required(a.index.or(cfg.raw.index.clone()), "index")?)?;
    let (net, pca) = (cfg.network()?, cfg.pca()?);
    let image = Image64::load(&a.image).with_context(|| format!("loading {}", a.image.display()))?;
    let roi = a.roi.unwrap_or_else(|| image.full_rect());
    let pipeline = Pipeline::new(&net, &pca, &cfg.pipeline)?;
    let d = pipeline.encode_query(&QuerySpec { image: &image, roi, model: a.model })?;
    let hits = index.search(&d, a.k)?;
    if a.json {
        let rows: Vec<_> = hits
            .iter()
            .map(|h| serde_json::json!({"id": h.id, "similarity": h.similarity}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        for (rank, h) in hits.iter().enumerate() {
            println!("{}\t{}\t{:.6}", rank + 1, h.id, h.similarity);
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated query models
    #[arg(long, value_delimiter = ',', default_value = "rq,aq,fq,sa")]
    models: Vec<QueryModel>,
    /// Comma-separated encoders
    #[arg(long, value_delimiter = ',', default_value = "rmac,wrmac")]
    encoders: Vec<EncoderKind>,
    /// Add an SA row scored against an attention-encoded database
    #[arg(long)]
    db_sa: bool,
    /// Prebuilt plain database index (otherwise encoded on the fly)
    #[arg(long)]
    index: Option<PathBuf>,
    /// Encoder the prebuilt index was built with
    #[arg(long, default_value = "wrmac", requires = "index")]
    index_encoder: EncoderKind,
    /// Keep each query's own image in the ranking
    #[arg(long)]
    keep_self: bool,
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let cfg: Resolved = a.pipeline.resolve()?;
    let (net, pca) = (cfg.network()?, cfg.pca()?);
    let manifest = load_manifest(a.manifest.or(cfg.raw.manifest.clone()))?;
    let images = load_images(&manifest)?;
    let mut databases = Databases::new();
    if let Some(p) = a.index.or(cfg.raw.index.clone()) {
        let index = read_index(&p)?;
        if index.len() != images.len() || images.iter().any(|(id, _)| index.get(id).is_none()) {
            bail!("index {} does not cover the manifest images", p.display());
        }
        databases.insert(a.index_encoder, false, index);
    }
    let grid = EvalGrid {
        models: a.models,
        encoders: a.encoders,
        database_sa: a.db_sa,
        self_junk: !a.keep_self,
    };
    let report = run_eval(&manifest, &images, &net, &pca, &cfg.pipeline, &grid, &mut databases)?;
    print!("{}", report.to_text());
    if let Some(p) = a.report.or(cfg.raw.report.clone()) {
        let mut w = create(&p)?;
        w.write_all(report.to_json()?.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProjectRoiArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Pixel ROI `x0,y0,x1,y1`
    #[arg(long)]
    roi: Rect,
    /// Image size `WxH`
    #[arg(long, value_parser = parse_size)]
    image_size: (usize, usize),
    /// Layer number (1-based); overrides --tap
    #[arg(long)]
    layer: Option<usize>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    Ok((w.parse().map_err(|e| format!("{e}"))?, h.parse().map_err(|e| format!("{e}"))?))
}

fn project(a: ProjectRoiArgs) -> anyhow::Result<()> {
    let cfg = a.pipeline.resolve()?;
    let net = cfg.network()?;
    let layer = match a.layer {
        Some(l) => l,
        None => net.tap(&cfg.pipeline.attention_tap)?,
    };
    let (w, h) = a.image_size;
    let proj = project_roi(&net, &a.roi, layer, w, h)?;
    let rf = rf_params(&net, layer);
    let (gw, gh) = net.output_size(layer, w, h).unwrap_or((0, 0));
    println!("layer {layer}: stride {} size {} offset {}", rf.stride, rf.size, rf.offset);
    println!("grid {gw}x{gh}");
    println!("{} -> {}", a.roi, proj);
    Ok(())
}
