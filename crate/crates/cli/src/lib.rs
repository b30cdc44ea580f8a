//! Pipeline commands behind the `mmsc` binary: score, transmit, receive,
//! evaluate, sweep, and the chained pipeline.
//!
//! Every command reads its inputs from a [`PipelineConfig`] and writes its
//! artifacts under `out_dir`, named after the image id (the input file stem).

pub mod config;
pub mod error;
pub mod report;
pub mod toy;

use std::fs;
use std::path::{Path, PathBuf};

use mmsc_core::allocation::{
    allocate, patch_scores, plan_stats, AllocationPlan, PatchGrid, PlanStats, RateTable,
};
use mmsc_core::codec::{decode_frame, encode_frame, EncodedFrame, PATCH_SIZE};
use mmsc_core::fusion::{names, normalize_relevance, FusionInputs, RelevanceMap};
use mmsc_core::metrics::{embedding_similarity, masked_mse, psnr, relevance_l1, BinaryMask};
use mmsc_core::tensors::{
    read_archive, read_pgm, read_ppm, write_archive, write_pgm, write_ppm, GrayImage, RasterImage,
    Tensor, TensorArchive,
};
use mmsc_core::transport::{transmit, ChannelConfig};
use rayon::prelude::*;

pub use config::PipelineConfig;
pub use error::CliError;
pub use report::{EvalRecord, SweepPoint};

pub type Result<T> = std::result::Result<T, CliError>;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_image(path: &Path) -> Result<RasterImage> {
    Ok(read_ppm(read_file(path)?.as_slice())?)
}

pub fn load_archive(path: &Path) -> Result<TensorArchive> {
    Ok(read_archive(read_file(path)?.as_slice())?)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    Ok(BinaryMask::from_gray(&read_pgm(
        read_file(path)?.as_slice(),
    )?))
}

pub fn load_frame(path: &Path) -> Result<EncodedFrame> {
    Ok(EncodedFrame::from_bytes(&read_file(path)?)?)
}

fn stem(path: &Path) -> Option<String> {
    path.file_stem().map(|s| s.to_string_lossy().into_owned())
}

/// Id used to name outputs: the stem of the first configured input.
pub fn image_id(cfg: &PipelineConfig) -> String {
    [&cfg.image, &cfg.archive, &cfg.mask, &cfg.frame]
        .into_iter()
        .flatten()
        .find_map(|p| stem(p))
        .unwrap_or_else(|| "image".to_string())
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::bad(format!("--{flag} is required")))
}

fn require_patch_size(cfg: &PipelineConfig) -> Result<()> {
    if cfg.patch_size != PATCH_SIZE {
        return Err(CliError::bad(format!(
            "patch size {} is not supported, codecs work on {PATCH_SIZE}x{PATCH_SIZE} patches",
            cfg.patch_size
        )));
    }
    Ok(())
}

/// Ground-truth mask from `--mask`, falling back to the archive's `gt_mask`.
fn find_mask(cfg: &PipelineConfig, archive: Option<&TensorArchive>) -> Result<Option<BinaryMask>> {
    if let Some(p) = &cfg.mask {
        return load_mask(p).map(Some);
    }
    match archive.and_then(|a| a.get(names::GT_MASK)) {
        Some(t) => Ok(Some(BinaryMask::from_tensor(t)?)),
        None => Ok(None),
    }
}

fn check_dims(what: &str, (w, h): (usize, usize), image: Option<&RasterImage>) -> Result<()> {
    if let Some(img) = image {
        if (img.width(), img.height()) != (w, h) {
            return Err(CliError::bad(format!(
                "{what} is {w}x{h}, image is {}x{}",
                img.width(),
                img.height()
            )));
        }
    }
    Ok(())
}

/// A normalized relevance map and, when the archive carries a golden
/// reference of the same size, the parity error against it.
#[derive(Debug, Clone)]
pub struct Scored {
    pub map: RelevanceMap,
    /// `max |computed - reference| / max |reference|` over the raw maps.
    pub reference_error: Option<f64>,
}

fn parity(raw: &RelevanceMap, reference: &RelevanceMap) -> Option<f64> {
    if (raw.height(), raw.width()) != (reference.height(), reference.width()) {
        return None;
    }
    let scale = reference
        .values()
        .iter()
        .fold(0f64, |m, &v| m.max((v as f64).abs()));
    let diff = raw
        .values()
        .iter()
        .zip(reference.values())
        .fold(0f64, |m, (&a, &b)| m.max((a as f64 - b as f64).abs()));
    Some(if scale > 0.0 { diff / scale } else { diff })
}

/// Relevance from archive tensors on a `height x width` grid, raw.
fn fusion_raw(
    archive: &TensorArchive,
    grid: Option<(usize, usize)>,
) -> Result<(RelevanceMap, Option<f64>)> {
    let inputs = FusionInputs::from_archive(archive)?;
    let (h, w) = match grid {
        Some(g) => g,
        None => inputs.default_grid()?,
    };
    let raw = inputs.relevance(h, w)?;
    let err = inputs.reference.as_ref().and_then(|r| parity(&raw, r));
    Ok((raw, err))
}

fn stored_map(t: &Tensor) -> Result<RelevanceMap> {
    if t.shape().len() != 2 {
        return Err(CliError::bad(format!(
            "{} must be a 2-d tensor",
            names::RELEVANCE
        )));
    }
    Ok(RelevanceMap::new(
        t.shape()[0],
        t.shape()[1],
        t.as_f32()?.to_vec(),
        true,
    )?)
}

/// Computes the normalized relevance map the allocator ranks patches by.
///
/// With `toy` set the map comes from the ground-truth mask. Otherwise an
/// archive entry `s_inf` written by an earlier `score` run is reused, and
/// failing that the map is fused from the archive's exported tensors.
pub fn score_map(
    cfg: &PipelineConfig,
    archive: Option<&TensorArchive>,
    image: Option<&RasterImage>,
) -> Result<Scored> {
    if cfg.toy {
        let mask = find_mask(cfg, archive)?
            .ok_or_else(|| CliError::bad("toy scorer needs --mask or a gt_mask archive entry"))?;
        check_dims("mask", (mask.width(), mask.height()), image)?;
        return Ok(Scored {
            map: toy::toy_relevance(&mask, cfg.blur_radius)?,
            reference_error: None,
        });
    }
    let archive =
        archive.ok_or_else(|| CliError::bad("--archive is required unless --toy is set"))?;
    if let Some(t) = archive.get(names::RELEVANCE) {
        let map = stored_map(t)?;
        check_dims("stored relevance map", (map.width(), map.height()), image)?;
        return Ok(Scored {
            map,
            reference_error: None,
        });
    }
    let (raw, reference_error) = fusion_raw(archive, image.map(|i| (i.height(), i.width())))?;
    Ok(Scored {
        map: normalize_relevance(&raw)?,
        reference_error,
    })
}

/// Relevance map as an 8-bit heatmap.
pub fn heatmap(map: &RelevanceMap) -> GrayImage {
    let px = map
        .values()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::new(map.width(), map.height(), px).expect("map dims")
}

#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub id: String,
    pub scored: Scored,
    pub archive_path: PathBuf,
    pub heatmap_path: PathBuf,
}

/// Writes `<id>.s_inf.mmta` holding the normalized map as `s_inf`, and
/// `<id>.s_inf.pgm` as a heatmap.
pub fn cmd_score(cfg: &PipelineConfig) -> Result<ScoreReport> {
    let archive = cfg.archive.as_deref().map(load_archive).transpose()?;
    let image = cfg.image.as_deref().map(load_image).transpose()?;
    let scored = score_map(cfg, archive.as_ref(), image.as_ref())?;
    let id = image_id(cfg);
    let map = &scored.map;

    let mut out = TensorArchive::new();
    out.push(Tensor::f32(
        names::RELEVANCE,
        vec![map.height(), map.width()],
        map.values().to_vec(),
    )?)?;
    let mut bytes = Vec::new();
    write_archive(&out, &mut bytes)?;
    let archive_path = cfg.out_dir.join(format!("{id}.s_inf.mmta"));
    write_file(&archive_path, &bytes)?;

    let mut pgm = Vec::new();
    write_pgm(&heatmap(map), &mut pgm)?;
    let heatmap_path = cfg.out_dir.join(format!("{id}.s_inf.pgm"));
    write_file(&heatmap_path, &pgm)?;

    Ok(ScoreReport {
        id,
        scored,
        archive_path,
        heatmap_path,
    })
}

/// Allocation and encoded frame for one image at one channel setting.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub plan: AllocationPlan,
    pub frame: EncodedFrame,
    pub budget: u64,
    pub full_payload: u64,
}

/// Scores patches, allocates under the channel budget, encodes, and passes
/// the frame through the channel.
pub fn transmit_image(
    image: &RasterImage,
    map: &RelevanceMap,
    table: &RateTable,
    channel: &ChannelConfig,
) -> Result<Transmission> {
    let grid = PatchGrid::new(image.height(), image.width(), PATCH_SIZE)?;
    let scores = patch_scores(map, &grid)?;
    let full_payload = table.full_payload(grid.len());
    let budget = channel.budget(full_payload)?;
    let plan = allocate(&scores, table, budget);
    let frame = transmit(encode_frame(image, &plan)?, channel)?;
    Ok(Transmission {
        plan,
        frame,
        budget,
        full_payload,
    })
}

fn plan_report(id: &str, t: &Transmission, stats: &PlanStats) -> String {
    let mut s = format!(
        "image_id = {id}\nbudget = {}\nfull_payload = {}\npayload = {}\nleftover = {}\nutilization = {:.6}\n",
        t.budget,
        t.full_payload,
        stats.total,
        t.plan.leftover(),
        stats.utilization
    );
    for (rate, count) in t.plan.table().rates().iter().zip(&stats.counts) {
        s.push_str(&format!("count_{rate} = {count}\n"));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TransmitReport {
    pub id: String,
    pub transmission: Transmission,
    pub stats: PlanStats,
    pub frame_path: PathBuf,
    pub plan_path: PathBuf,
}

/// Writes the frame (`--frame`, or `<id>.mmsf`) and `<id>.plan.txt`.
pub fn cmd_transmit(cfg: &PipelineConfig) -> Result<TransmitReport> {
    require_patch_size(cfg)?;
    let image = load_image(require(&cfg.image, "image")?)?;
    let archive = cfg.archive.as_deref().map(load_archive).transpose()?;
    let scored = score_map(cfg, archive.as_ref(), Some(&image))?;
    let t = transmit_image(&image, &scored.map, &cfg.rates, &cfg.channel())?;
    let stats = plan_stats(&t.plan);
    let id = image_id(cfg);
    let frame_path = cfg
        .frame
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(format!("{id}.mmsf")));
    write_file(&frame_path, &t.frame.to_bytes())?;
    let plan_path = cfg.out_dir.join(format!("{id}.plan.txt"));
    write_file(&plan_path, plan_report(&id, &t, &stats).as_bytes())?;
    Ok(TransmitReport {
        id,
        transmission: t,
        stats,
        frame_path,
        plan_path,
    })
}

/// Decodes `--frame` into `--recon`, or `<frame stem>.recon.ppm`.
pub fn cmd_receive(cfg: &PipelineConfig) -> Result<PathBuf> {
    let frame_path = require(&cfg.frame, "frame")?;
    let image = decode_frame(&load_frame(frame_path)?)?;
    let out = match &cfg.recon {
        Some(p) => p.clone(),
        None => cfg.out_dir.join(format!(
            "{}.recon.ppm",
            stem(frame_path).unwrap_or_else(|| "frame".into())
        )),
    };
    let mut bytes = Vec::new();
    write_ppm(&image, &mut bytes)?;
    write_file(&out, &bytes)?;
    Ok(out)
}

/// Reconstruction-side data for the relevance and embedding metrics.
#[derive(Debug, Default, Clone)]
pub struct SemanticInputs {
    /// Normalized relevance of the original and of the reconstruction.
    pub relevance: Option<(RelevanceMap, RelevanceMap)>,
    /// Reconstructed-image and query embeddings.
    pub embeddings: Option<(Vec<f32>, Vec<f32>)>,
}

fn f32_entry(a: &TensorArchive, name: &str) -> Result<Option<Vec<f32>>> {
    a.get(name).map(|t| Ok(t.as_f32()?.to_vec())).transpose()
}

fn semantic_inputs(
    cfg: &PipelineConfig,
    archive: Option<&TensorArchive>,
    original: &RasterImage,
) -> Result<SemanticInputs> {
    let recon_archive = cfg.recon_archive.as_deref().map(load_archive).transpose()?;
    let mut out = SemanticInputs::default();

    if let (false, Some(a), Some(r)) = (cfg.toy, archive, recon_archive.as_ref()) {
        let grid = Some((original.height(), original.width()));
        let orig = normalize_relevance(&fusion_raw(a, grid)?.0)?;
        let rec = normalize_relevance(&fusion_raw(r, grid)?.0)?;
        out.relevance = Some((orig, rec));
    }

    let recon_emb = match &recon_archive {
        Some(r) => f32_entry(r, names::CLIP_IMAGE)?,
        None => None,
    };
    let recon_emb = match (recon_emb, archive) {
        (Some(e), _) => Some(e),
        (None, Some(a)) => f32_entry(a, names::CLIP_IMAGE_RECON)?,
        (None, None) => None,
    };
    let text = match archive {
        Some(a) => f32_entry(a, names::CLIP_TEXT)?,
        None => None,
    };
    let text = match (text, &recon_archive) {
        (Some(t), _) => Some(t),
        (None, Some(r)) => f32_entry(r, names::CLIP_TEXT)?,
        (None, None) => None,
    };
    if let (Some(e), Some(t)) = (recon_emb, text) {
        out.embeddings = Some((e, t));
    }
    Ok(out)
}

/// Channel rate reported for a budget: the configured fraction, or the
/// budget's share of the full payload.
fn reported_rate(channel: &ChannelConfig, budget: u64, full: u64) -> f64 {
    match *channel {
        ChannelConfig::Rate(r) => r,
        ChannelConfig::Budget(_) if full == 0 => 0.0,
        ChannelConfig::Budget(_) => budget as f64 / full as f64,
    }
}

/// Builds one evaluation row.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_reconstruction(
    id: &str,
    original: &RasterImage,
    reconstructed: &RasterImage,
    frame: &EncodedFrame,
    budget: u64,
    rate: f64,
    mask: Option<&BinaryMask>,
    semantic: &SemanticInputs,
) -> Result<EvalRecord> {
    let mut counts = vec![0usize; frame.header().rates.levels()];
    for &l in frame.levels() {
        counts[l as usize] += 1;
    }
    let masked = match mask {
        Some(m) if m.count() > 0 => Some(masked_mse(original, reconstructed, m)?),
        Some(m) => {
            check_dims("mask", (m.width(), m.height()), Some(original))?;
            None
        }
        None => None,
    };
    let l1 = match &semantic.relevance {
        Some((a, b)) => Some(relevance_l1(a, b)?),
        None => None,
    };
    let emb = match &semantic.embeddings {
        Some((e, t)) => Some(embedding_similarity(e, t)?),
        None => None,
    };
    Ok(EvalRecord {
        image_id: id.to_string(),
        budget,
        rate,
        counts,
        masked_mse: masked,
        relevance_l1: l1,
        embedding_score: emb,
        psnr: psnr(original, reconstructed)?,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub record: EvalRecord,
    pub csv: String,
    pub csv_path: PathBuf,
}

/// Compares `--image` with the reconstruction (`--recon`, or `--frame`
/// decoded) and writes `<id>.metrics.csv`.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<EvaluateReport> {
    let original = load_image(require(&cfg.image, "image")?)?;
    let frame = load_frame(require(&cfg.frame, "frame")?)?;
    let reconstructed = match &cfg.recon {
        Some(p) => load_image(p)?,
        None => decode_frame(&frame)?,
    };
    if (reconstructed.width(), reconstructed.height()) != (original.width(), original.height()) {
        return Err(CliError::bad("reconstruction and image differ in size"));
    }
    let archive = cfg.archive.as_deref().map(load_archive).transpose()?;
    let mask = find_mask(cfg, archive.as_ref())?;
    let semantic = semantic_inputs(cfg, archive.as_ref(), &original)?;
    let channel = cfg.channel();
    let full = frame.full_payload();
    let budget = channel.budget(full)?;
    let id = image_id(cfg);
    let record = evaluate_reconstruction(
        &id,
        &original,
        &reconstructed,
        &frame,
        budget,
        reported_rate(&channel, budget, full),
        mask.as_ref(),
        &semantic,
    )?;
    let csv = report::eval_csv(&frame.header().rates, std::slice::from_ref(&record));
    let csv_path = cfg.out_dir.join(format!("{id}.metrics.csv"));
    write_file(&csv_path, csv.as_bytes())?;
    Ok(EvaluateReport {
        record,
        csv,
        csv_path,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub score: ScoreReport,
    pub transmit: TransmitReport,
    pub recon_path: PathBuf,
    pub evaluate: EvaluateReport,
}

/// score, transmit, receive and evaluate in sequence.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let score = cmd_score(cfg)?;
    let transmit = cmd_transmit(cfg)?;
    let mut next = cfg.clone();
    next.frame = Some(transmit.frame_path.clone());
    let recon_path = cmd_receive(&next)?;
    next.recon = Some(recon_path.clone());
    let evaluate = cmd_evaluate(&next)?;
    Ok(PipelineReport {
        score,
        transmit,
        recon_path,
        evaluate,
    })
}

/// One corpus entry: `<id>.ppm` with optional `<id>.pgm` mask and `<id>.mmta` archive.
struct CorpusItem {
    id: String,
    image: RasterImage,
    mask: Option<BinaryMask>,
    map: RelevanceMap,
    semantic: SemanticInputs,
}

fn corpus_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .filter_map(|p| stem(&p))
        .collect();
    ids.sort();
    Ok(ids)
}

fn load_item(cfg: &PipelineConfig, dir: &Path, id: &str) -> Result<CorpusItem> {
    let image = load_image(&dir.join(format!("{id}.ppm")))?;
    let archive_path = dir.join(format!("{id}.mmta"));
    let archive = archive_path
        .exists()
        .then(|| load_archive(&archive_path))
        .transpose()?;
    let mask_path = dir.join(format!("{id}.pgm"));
    let mut item_cfg = cfg.clone();
    item_cfg.mask = mask_path.exists().then_some(mask_path);
    item_cfg.recon_archive = None;
    // without exported tensors the mask is the only relevance source
    item_cfg.toy = cfg.toy || archive.is_none();
    let mask = find_mask(&item_cfg, archive.as_ref())?;
    if let Some(m) = &mask {
        check_dims(
            &format!("{id}: mask"),
            (m.width(), m.height()),
            Some(&image),
        )?;
    }
    let map = score_map(&item_cfg, archive.as_ref(), Some(&image))
        .map_err(|e| CliError::bad(format!("{id}: {e}")))?
        .map;
    let semantic = semantic_inputs(&item_cfg, archive.as_ref(), &image)?;
    Ok(CorpusItem {
        id: id.to_string(),
        image,
        mask,
        map,
        semantic,
    })
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub records: Vec<EvalRecord>,
    pub points: Vec<SweepPoint>,
    pub files: Vec<PathBuf>,
}

/// Runs every corpus image at every sweep rate. Writes per-image rows to
/// `sweep_images.csv`, per-rate means to `sweep.csv`, and one SVG per metric.
pub fn cmd_sweep(cfg: &PipelineConfig) -> Result<SweepReport> {
    require_patch_size(cfg)?;
    let dir = require(&cfg.corpus, "corpus")?;
    let ids = corpus_ids(dir)?;
    if ids.is_empty() {
        return Err(CliError::bad(format!(
            "no .ppm images in {}",
            dir.display()
        )));
    }
    let items: Vec<CorpusItem> = ids
        .par_iter()
        .map(|id| load_item(cfg, dir, id))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, f64)> = (0..items.len())
        .flat_map(|i| cfg.sweep_rates.iter().map(move |&r| (i, r)))
        .collect();
    let mut records: Vec<EvalRecord> = jobs
        .par_iter()
        .map(|&(i, rate)| {
            let item = &items[i];
            let channel = ChannelConfig::Rate(rate);
            let t = transmit_image(&item.image, &item.map, &cfg.rates, &channel)?;
            let rec = decode_frame(&t.frame)?;
            evaluate_reconstruction(
                &item.id,
                &item.image,
                &rec,
                &t.frame,
                t.budget,
                rate,
                item.mask.as_ref(),
                &item.semantic,
            )
        })
        .collect::<Result<_>>()?;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(a.rate.total_cmp(&b.rate)));

    let mut rates = cfg.sweep_rates.clone();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let points = report::aggregate(&records, &rates);

    let mut files = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = cfg.out_dir.join(name);
        write_file(&p, text.as_bytes())?;
        files.push(p);
        Ok(())
    };
    emit("sweep_images.csv", report::eval_csv(&cfg.rates, &records))?;
    emit("sweep.csv", report::sweep_csv(&points))?;
    type Getter = fn(&SweepPoint) -> Option<f64>;
    let series: [(&str, &str, Getter); 4] = [
        ("masked_mse", "masked MSE", |p| p.masked_mse),
        ("psnr", "PSNR (dB)", |p| Some(p.psnr)),
        ("relevance_l1", "relevance L1", |p| p.relevance_l1),
        ("embedding_score", "embedding score", |p| p.embedding_score),
    ];
    for (key, label, get) in series {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| get(p).map(|v| (p.rate, v)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        emit(
            &format!("sweep_{key}.svg"),
            report::line_plot(
                &format!("{label} vs channel rate"),
                "channel rate",
                label,
                &pts,
            ),
        )?;
    }
    Ok(SweepReport {
        records,
        points,
        files,
    })
}
