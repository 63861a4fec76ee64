// SPDX-License-Identifier: Apache-2.0

//! `vmslim`: inspect, flatten and slim virtual disk images.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;
use vmslim::catalog::{catalog_stats, parse_catalog, Catalog, Label, ParseMode};
use vmslim::instance::{extract, unpack, EntryKind, ExtractOptions};
use vmslim::report::{
    monitor_table, occupancy_table, read_estimate_csv, read_monitor_csv, read_occupancy_csv, render_estimates_csv,
    EstimateInput,
};
use vmslim::source::ByteSource;
use vmslim::vdi::{looks_like_vdi, BlockState};
use vmslim::volume::parse_mbr;
use vmslim::{open_fs, open_volume, parse_vdi, FileSource, FsVolume, VolumeSelector, VolumeSlice};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "vmslim", version, about = "Reduce VM disk images to the files a workload touches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the VDI header and block map summary.
    Inspect { vdi: PathBuf },
    /// Flatten a VDI image into a raw disk image.
    ToRaw { vdi: PathBuf, out: PathBuf },
    /// Print filesystem statistics for a raw or VDI image.
    FsStat {
        image: PathBuf,
        #[command(flatten)]
        volume: VolumeArgs,
    },
    /// Catalog maintenance.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Extract the files named by a catalog into a VSIP package.
    Extract {
        image: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: PathBuf,
        /// Read the catalog as free text and pick out absolute paths.
        #[arg(long)]
        scan: bool,
        #[command(flatten)]
        volume: VolumeArgs,
    },
    /// Check a VSIP package and every content hash.
    Verify { vsip: PathBuf },
    /// Render occupancy, monitoring or estimate tables.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Args, Debug)]
struct VolumeArgs {
    /// Byte offset of the filesystem inside the disk.
    #[arg(long, conflicts_with = "partition")]
    offset: Option<u64>,
    /// MBR partition slot (0-3).
    #[arg(long)]
    partition: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum CatalogCommand {
    /// Normalize, sort and deduplicate a catalog.
    Normalize {
        input: PathBuf,
        out: PathBuf,
        #[arg(long)]
        scan: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum ReportCommand {
    /// Filesystem size against allocated disk size.
    Occupancy(ReportArgs),
    /// Catalog size against filesystem size.
    Monitor(ReportArgs),
    /// Combined reduction estimate.
    Estimate {
        #[command(flatten)]
        args: ReportArgs,
        #[arg(long, requires_all = ["app", "base"], conflicts_with = "input")]
        boot: Option<f64>,
        #[arg(long)]
        app: Option<f64>,
        #[arg(long)]
        base: Option<f64>,
        /// Percentage of the deduplicated union of both catalogs.
        #[arg(long)]
        union: Option<f64>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn data_err(e: impl Display) -> Failure {
    Failure { code: EXIT_DATA, message: e.to_string() }
}

fn usage_err(e: impl Display) -> Failure {
    Failure { code: EXIT_USAGE, message: e.to_string() }
}

fn with_path(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| data_err(format!("{}: {e}", path.display()))
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("vmslim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Inspect { vdi } => inspect(&vdi),
        Command::ToRaw { vdi, out } => to_raw(&vdi, &out),
        Command::FsStat { image, volume } => fs_stat(&image, &volume),
        Command::Catalog(CatalogCommand::Normalize { input, out, scan }) => normalize(&input, &out, scan),
        Command::Extract { image, catalog, label, out, scan, volume } => {
            extract_cmd(&image, &catalog, &label, &out, scan, &volume)
        }
        Command::Verify { vsip } => verify(&vsip),
        Command::Report(cmd) => report(cmd),
    }
}

/// Writes through a temporary file next to `dest` and renames it into place
/// only once `fill` succeeds.
fn write_atomically<T>(dest: &Path, fill: impl FnOnce(&mut BufWriter<&mut File>) -> Result<T, Failure>) -> Result<T, Failure> {
    let dir = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(with_path(dir))?;
    let value = {
        let mut w = BufWriter::new(tmp.as_file_mut());
        let value = fill(&mut w)?;
        w.flush().map_err(with_path(dest))?;
        value
    };
    tmp.as_file().sync_all().map_err(with_path(dest))?;
    tmp.persist(dest).map_err(|e| data_err(format!("{}: {}", dest.display(), e.error)))?;
    Ok(value)
}

fn open_source(path: &Path) -> Result<FileSource, Failure> {
    FileSource::open(path).map_err(with_path(path))
}

/// A raw disk or the virtual disk inside a VDI container.
fn open_disk(path: &Path) -> Result<Box<dyn ByteSource>, Failure> {
    let src = open_source(path)?;
    if looks_like_vdi(&src).map_err(with_path(path))? {
        Ok(Box::new(parse_vdi(src).map_err(data_err)?))
    } else {
        Ok(Box::new(src))
    }
}

fn select_volume(disk: Box<dyn ByteSource>, args: &VolumeArgs) -> Result<VolumeSlice<Box<dyn ByteSource>>, Failure> {
    let selector = match (args.offset, args.partition) {
        (Some(off), _) => VolumeSelector::Offset(off),
        (None, Some(k)) => VolumeSelector::Partition(k),
        // A disk without a partition table is taken as a bare filesystem.
        (None, None) if parse_mbr(&disk).map(|p| p.is_empty()).unwrap_or(true) => VolumeSelector::Offset(0),
        (None, None) => VolumeSelector::Auto,
    };
    open_volume(disk, selector).map_err(data_err)
}

fn open_filesystem(path: &Path, args: &VolumeArgs) -> Result<FsVolume<VolumeSlice<Box<dyn ByteSource>>>, Failure> {
    let volume = select_volume(open_disk(path)?, args)?;
    open_fs(volume).map_err(data_err)
}

fn uuid(bytes: &[u8; 16]) -> String {
    let h: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
}

fn inspect(path: &Path) -> Outcome {
    let img = parse_vdi(open_source(path)?).map_err(data_err)?;
    let h = &img.header;
    let (mut allocated, mut zero, mut unallocated) = (0u64, 0u64, 0u64);
    for i in 0..img.block_map.len() {
        match img.block_map.state(i) {
            BlockState::Allocated(_) => allocated += 1,
            BlockState::Zero => zero += 1,
            BlockState::Unallocated => unallocated += 1,
        }
    }
    let desc = String::from_utf8_lossy(&h.description);
    println!("info:              {}", img.pre_header.info());
    println!("version:           {}.{}", img.pre_header.version_major, img.pre_header.version_minor);
    println!("type:              {:?}", h.image_type);
    println!("header size:       {}", h.header_size);
    println!("flags:             {:#x}", h.flags);
    println!("description:       {}", desc.trim_end_matches('\0'));
    println!("disk size:         {} bytes", h.disk_size);
    println!("block size:        {}", h.block_size);
    println!("blocks total:      {}", h.blocks_total);
    println!("blocks allocated:  {}", h.blocks_allocated);
    println!("block map:         {allocated} allocated, {zero} zero, {unallocated} unallocated");
    println!("map offset:        {}", h.blocks_offset);
    println!("data offset:       {}", h.data_offset);
    println!("uuid:              {}", uuid(&h.uuids[0]));
    println!("snapshot uuid:     {}", uuid(&h.uuids[1]));
    Ok(0)
}

fn to_raw(vdi: &Path, out: &Path) -> Outcome {
    let img = parse_vdi(open_source(vdi)?).map_err(data_err)?;
    let written = write_atomically(out, |w| img.to_raw(w).map_err(data_err))?;
    println!("wrote {written} bytes to {}", out.display());
    Ok(0)
}

fn fs_stat(image: &Path, args: &VolumeArgs) -> Outcome {
    let fs = open_filesystem(image, args)?;
    let sb = fs.superblock();
    let stats = fs.fs_stats().map_err(data_err)?;
    println!("volume offset:     {}", fs.volume().offset());
    println!("volume name:       {}", sb.volume_name());
    println!("block size:        {}", fs.block_size());
    println!("blocks:            {} total, {} free", sb.blocks_count, sb.free_blocks_count);
    println!("journal:           {}", if sb.has_journal() { "present (ignored)" } else { "none" });
    println!("used bytes:        {}", stats.used_bytes);
    println!("total bytes:       {}", stats.total_bytes);
    println!("files:             {}", stats.file_count);
    println!("directories:       {}", stats.dir_count);
    println!("symlinks:          {}", stats.symlink_count);
    println!("other:             {}", stats.other_count);
    println!("content bytes:     {}", stats.content_bytes);
    println!("disk usage bytes:  {}", stats.disk_usage_bytes);
    Ok(0)
}

fn load_catalog(path: &Path, scan: bool, label: Label) -> Result<Catalog, Failure> {
    let text = std::fs::read(path).map_err(with_path(path))?;
    let mode = if scan { ParseMode::TokenScan } else { ParseMode::StrictList };
    let provenance = path.display().to_string();
    let catalog = parse_catalog(&text, mode, label, &provenance).map_err(|e| data_err(format!("{provenance}: {e}")))?;
    if let Err(e) = catalog.check_nonempty() {
        eprintln!("vmslim: warning: {provenance}: {e}");
    }
    Ok(catalog)
}

fn normalize(input: &Path, out: &Path, scan: bool) -> Outcome {
    let catalog = load_catalog(input, scan, Label::Custom("catalog".into()))?;
    write_atomically(out, |w| w.write_all(catalog.to_text().as_bytes()).map_err(with_path(out)))?;
    println!("{} entries written to {}", catalog.len(), out.display());
    Ok(0)
}

fn extract_cmd(image: &Path, catalog: &Path, label: &str, out: &Path, scan: bool, args: &VolumeArgs) -> Outcome {
    let label: Label = label.parse().map_err(usage_err)?;
    if !matches!(label, Label::Boot | Label::App) {
        return Err(usage_err(format!("label must be boot or app, got {label}")));
    }
    let fs = open_filesystem(image, args)?;
    let catalog = load_catalog(catalog, scan, label)?;
    let stats = catalog_stats(&catalog, &fs).map_err(data_err)?;
    let pkg = extract(&fs, &catalog, ExtractOptions::from_env()).map_err(data_err)?;
    let written = write_atomically(out, |w| pkg.pack(w).map_err(with_path(out)))?;

    let files = pkg.entries().iter().filter(|e| e.kind == EntryKind::File).count();
    println!("catalog:           {} entries, {} found files, {} bytes", catalog.len(), stats.file_count, stats.total_bytes);
    println!("filesystem used:   {} bytes", stats.fs_used_bytes);
    println!("reduction ratio:   {:.2}%", stats.pct_of_fs);
    println!("package:           {} entries, {files} files, {} content bytes", pkg.entries().len(), pkg.content_bytes());
    println!("wrote {written} bytes to {}", out.display());
    for path in pkg.missing() {
        eprintln!("vmslim: missing: {path}");
    }
    Ok(if pkg.missing().is_empty() { 0 } else { EXIT_PARTIAL })
}

fn verify(path: &Path) -> Outcome {
    let bytes = std::fs::read(path).map_err(with_path(path))?;
    let pkg = unpack(&bytes).map_err(data_err)?;
    let blobs = pkg.entries().iter().filter(|e| e.kind.has_blob()).count();
    println!("format version:    {}", pkg.manifest.format_version);
    println!("entries:           {}", pkg.entries().len());
    println!("missing:           {}", pkg.missing().len());
    println!("content bytes:     {}", pkg.content_bytes());
    println!("hashes:            {blobs}/{blobs} OK");
    Ok(0)
}

fn open_input(args: &ReportArgs) -> Result<(File, &Path), Failure> {
    let path = args.input.as_deref().ok_or_else(|| usage_err("--input is required"))?;
    Ok((File::open(path).map_err(with_path(path))?, path))
}

fn report(cmd: ReportCommand) -> Outcome {
    let out = match cmd {
        ReportCommand::Occupancy(args) => {
            let (file, path) = open_input(&args)?;
            let rows = read_occupancy_csv(file).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            let table = occupancy_table(&rows).map_err(data_err)?;
            match args.format {
                Format::Text => table.to_text(),
                Format::Csv => table.to_csv().map_err(data_err)?,
            }
        }
        ReportCommand::Monitor(args) => {
            let (file, path) = open_input(&args)?;
            let rows = read_monitor_csv(file).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            let table = monitor_table(&rows).map_err(data_err)?;
            match args.format {
                Format::Text => table.to_text(),
                Format::Csv => table.to_csv().map_err(data_err)?,
            }
        }
        ReportCommand::Estimate { args, boot, app, base, union } => {
            let inputs = match (boot, app, base) {
                (Some(boot_pct), Some(app_pct), Some(base_fs_gib)) => {
                    vec![EstimateInput { boot_pct, app_pct, base_fs_gib, union_pct: union }]
                }
                (None, None, None) => {
                    let (file, path) = open_input(&args)?;
                    read_estimate_csv(file).map_err(|e| data_err(format!("{}: {e}", path.display())))?
                }
                _ => return Err(usage_err("--boot, --app and --base go together")),
            };
            let estimates = inputs.iter().map(EstimateInput::evaluate).collect::<Result<Vec<_>, _>>().map_err(data_err)?;
            match args.format {
                Format::Text => estimates.iter().map(|e| e.to_text()).collect(),
                Format::Csv => render_estimates_csv(&estimates).map_err(data_err)?,
            }
        }
    };
    print!("{out}");
    Ok(0)
}
