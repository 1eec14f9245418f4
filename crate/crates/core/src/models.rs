//! Closed-form comparison models: block verification time, per-block
//! authorization data, bandwidth-limited throughput and block size.
//!
//! All quantities are integers (microseconds, bytes, tx/s). Tables render as
//! CSV and as aligned text; `KB` means 1000 bytes throughout.

use std::fmt::Write as _;

use crate::config::{ConfigError, KeyValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModelParams {
    pub t_sig_cpu_us: u64,
    pub t_sig_gpu_us: u64,
    pub t_ecdsa_us: u64,
    pub t_mldsa_us: u64,
    pub t_groth16_verify_us: u64,
    pub solana_tx_bytes: u64,
    /// Payload plus attestation, as modelled.
    pub ace_tx_bytes: u64,
    pub ace_payload_bytes: u64,
    pub header_bytes: u64,
    pub witness_bundle_bytes: u64,
    pub bandwidth_bytes_per_s: u64,
    pub sig_bytes: u64,
    pub pubkey_bytes: u64,
    /// Opaque per-transaction framing in the Solana footprint.
    pub solana_overhead_bytes: u64,
    pub mldsa_auth_bytes: u64,
    pub fc_wire_bytes: u64,
    pub fc_proof_bytes: u64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            t_sig_cpu_us: 76,
            t_sig_gpu_us: 2,
            t_ecdsa_us: 50,
            t_mldsa_us: 200,
            t_groth16_verify_us: 500,
            solana_tx_bytes: 1232,
            ace_tx_bytes: 244,
            ace_payload_bytes: 154,
            header_bytes: 256,
            witness_bundle_bytes: 400,
            bandwidth_bytes_per_s: 125_000_000,
            sig_bytes: 64,
            pubkey_bytes: 32,
            solana_overhead_bytes: 982,
            mldsa_auth_bytes: 3732,
            fc_wire_bytes: 328,
            fc_proof_bytes: 256,
        }
    }
}

macro_rules! params_kv {
    ($($field:ident),* $(,)?) => {
        impl CostModelParams {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Defaults overridden by any key in [`Self::KEYS`]; other keys are ignored.
            pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
                let mut p = CostModelParams::default();
                $(kv.read_into(stringify!($field), &mut p.$field)?;)*
                $(if p.$field == 0 {
                    return Err(ConfigError::Invalid(format!("{} must be positive", stringify!($field))));
                })*
                Ok(p)
            }
        }
    };
}

params_kv!(
    t_sig_cpu_us,
    t_sig_gpu_us,
    t_ecdsa_us,
    t_mldsa_us,
    t_groth16_verify_us,
    solana_tx_bytes,
    ace_tx_bytes,
    ace_payload_bytes,
    header_bytes,
    witness_bundle_bytes,
    bandwidth_bytes_per_s,
    sig_bytes,
    pubkey_bytes,
    solana_overhead_bytes,
    mldsa_auth_bytes,
    fc_wire_bytes,
    fc_proof_bytes,
);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    SolanaCpu,
    SolanaGpu,
    Ace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthScheme {
    Ed25519,
    MlDsa,
    ZkAce,
}

/// Block verification time in microseconds.
pub fn verify_time_us(system: System, n_txs: u64, p: &CostModelParams) -> u64 {
    match system {
        System::SolanaCpu => n_txs * p.t_sig_cpu_us,
        System::SolanaGpu => n_txs * p.t_sig_gpu_us,
        System::Ace => p.t_groth16_verify_us,
    }
}

/// Authorization bytes a block carries.
pub fn auth_data_per_block(scheme: AuthScheme, n_txs: u64, p: &CostModelParams) -> u64 {
    match scheme {
        AuthScheme::Ed25519 => n_txs * (p.sig_bytes + p.pubkey_bytes),
        AuthScheme::MlDsa => n_txs * p.mldsa_auth_bytes,
        AuthScheme::ZkAce => p.fc_proof_bytes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthTps {
    pub per_tx_bytes: u64,
    pub tps: u64,
    /// Per-transaction bytes and throughput when witness bundles share the link.
    pub combined: Option<(u64, u64)>,
}

pub fn bandwidth_tps(system: System, p: &CostModelParams) -> BandwidthTps {
    match system {
        System::SolanaCpu | System::SolanaGpu => BandwidthTps {
            per_tx_bytes: p.solana_tx_bytes,
            tps: p.bandwidth_bytes_per_s / p.solana_tx_bytes,
            combined: None,
        },
        System::Ace => {
            let combined = p.ace_tx_bytes + p.witness_bundle_bytes;
            BandwidthTps {
                per_tx_bytes: p.ace_tx_bytes,
                tps: p.bandwidth_bytes_per_s / p.ace_tx_bytes,
                combined: Some((combined, p.bandwidth_bytes_per_s / combined)),
            }
        }
    }
}

pub fn block_bytes_ace(n_txs: u64, p: &CostModelParams) -> u64 {
    p.header_bytes + n_txs * p.ace_tx_bytes
}

pub fn block_bytes_solana(n_txs: u64, p: &CostModelParams) -> u64 {
    n_txs * p.solana_tx_bytes
}

/// `x` rounded half-up to a multiple of `unit`.
pub fn round_to(x: u64, unit: u64) -> u64 {
    (x + unit / 2) / unit * unit
}

/// `1234567` as `1,234,567`.
pub fn group_thousands(x: u64) -> String {
    let digits = x.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Exact decimal rendering of `num / den` with trailing zeros trimmed.
fn decimal(num: u64, den: u64, max_frac: u32) -> String {
    let int = num / den;
    let mut rem = num % den;
    let mut frac = String::new();
    for _ in 0..max_frac {
        if rem == 0 {
            break;
        }
        rem *= 10;
        frac.push(char::from(b'0' + (rem / den) as u8));
        rem %= den;
    }
    if frac.is_empty() {
        group_thousands(int)
    } else {
        format!("{}.{frac}", group_thousands(int))
    }
}

/// `a / b` to one decimal, truncated, e.g. `1.9x`.
pub fn fmt_ratio_tenths(a: u64, b: u64) -> String {
    let tenths = a * 10 / b;
    format!("{}.{}x", tenths / 10, tenths % 10)
}

/// One table cell: the machine-readable CSV value and its display form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub csv: String,
    pub text: String,
}

impl Cell {
    fn same(s: impl Into<String>) -> Self {
        let s = s.into();
        Cell {
            csv: s.clone(),
            text: s,
        }
    }

    fn count(x: u64) -> Self {
        Cell {
            csv: x.to_string(),
            text: group_thousands(x),
        }
    }

    /// `num / den` with display unit `unit`.
    fn scaled(num: u64, den: u64, unit: &str) -> Self {
        Cell {
            csv: decimal(num, den, 3).replace(',', ""),
            text: format!("{} {unit}", decimal(num, den, 3)),
        }
    }

    fn times(x: u64) -> Self {
        Cell {
            csv: x.to_string(),
            text: format!("{}x", group_thousands(x)),
        }
    }

    fn ratio_tenths(a: u64, b: u64) -> Self {
        let text = fmt_ratio_tenths(a, b);
        Cell {
            csv: text.trim_end_matches('x').to_string(),
            text,
        }
    }
}

/// A rendered table: header row plus data rows of equal width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub title: &'static str,
    /// CSV column names and display column names.
    pub header: Vec<(&'static str, &'static str)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &'static str, title: &'static str, header: &[(&'static str, &'static str)]) -> Self {
        Table {
            name,
            title,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let field = |s: &str| {
            if s.contains([',', '"']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::new();
        let head: Vec<String> = self.header.iter().map(|h| field(h.0)).collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| field(&c.csv)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let lines: Vec<Vec<&str>> = std::iter::once(self.header.iter().map(|h| h.1).collect())
            .chain(self.rows.iter().map(|r| r.iter().map(|c| c.text.as_str()).collect()))
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let render = |cells: &[&str]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, &w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "{}", render(&lines[0]));
        let rule = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        let _ = writeln!(out, "{}", "-".repeat(rule));
        for l in &lines[1..] {
            let _ = writeln!(out, "{}", render(l));
        }
        out
    }
}

pub const VERIFY_TABLE_SIZES: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];
pub const AUTH_TABLE_SIZES: [u64; 2] = [1_000, 10_000];

pub fn block_verify_table(p: &CostModelParams) -> Table {
    let mut t = Table::new(
        "block_verify",
        "Block verification time",
        &[
            ("block_txs", "Block size (tx)"),
            ("solana_gpu_ms", "Solana (GPU)"),
            ("solana_cpu_ms", "Solana (CPU)"),
            ("ace_ms", "ACE (1 proof)"),
            ("speedup_vs_gpu", "Speedup"),
        ],
    );
    for n in VERIFY_TABLE_SIZES {
        let gpu = verify_time_us(System::SolanaGpu, n, p);
        let ace = verify_time_us(System::Ace, n, p);
        t.push(vec![
            Cell::count(n),
            Cell::scaled(gpu, 1000, "ms"),
            Cell::scaled(verify_time_us(System::SolanaCpu, n, p), 1000, "ms"),
            Cell::scaled(ace, 1000, "ms"),
            Cell::times(gpu / ace),
        ]);
    }
    t
}

pub fn auth_data_table(p: &CostModelParams) -> Table {
    let mut t = Table::new(
        "auth_data",
        "Per-block authorization data (1 KB = 1000 B)",
        &[
            ("block_txs", "Block size (tx)"),
            ("solana_ed25519_kb", "Solana (Ed25519)"),
            ("solana_mldsa44_kb", "Solana (ML-DSA-44)"),
            ("ace_kb", "ACE (one proof)"),
            ("mldsa_over_ace", "ACE vs ML-DSA"),
        ],
    );
    for n in AUTH_TABLE_SIZES {
        let mldsa = auth_data_per_block(AuthScheme::MlDsa, n, p);
        let zk = auth_data_per_block(AuthScheme::ZkAce, n, p);
        t.push(vec![
            Cell::count(n),
            Cell::scaled(auth_data_per_block(AuthScheme::Ed25519, n, p), 1000, "KB"),
            Cell::scaled(mldsa, 1000, "KB"),
            Cell::scaled(zk, 1000, "KB"),
            Cell::times(mldsa / zk),
        ]);
    }
    t
}

/// Per-transaction bytes of the implemented wire format, for the bandwidth table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImplementedFootprint {
    pub block_record_bytes: u64,
    pub witness_bundle_bytes: u64,
}

pub fn bandwidth_table(p: &CostModelParams, implemented: Option<ImplementedFootprint>) -> Table {
    let mut t = Table::new(
        "bandwidth",
        "Bandwidth-limited throughput",
        &[
            ("system", "System"),
            ("per_tx_bytes", "Per-tx bytes"),
            ("tps", "TPS"),
            ("tps_rounded", "TPS (rounded)"),
            ("advantage_vs_solana", "vs Solana"),
        ],
    );
    let solana = bandwidth_tps(System::SolanaCpu, p);
    let ace = bandwidth_tps(System::Ace, p);
    let (combined_bytes, combined_tps) = ace.combined.expect("ace reports a combined footprint");
    let mut row = |name: &str, bytes: u64, tps: u64| {
        t.push(vec![
            Cell::same(name),
            Cell::count(bytes),
            Cell::count(tps),
            Cell::count(round_to(tps, 1000)),
            Cell::ratio_tenths(solana.per_tx_bytes, bytes),
        ]);
    };
    row("solana", solana.per_tx_bytes, solana.tps);
    row("ace_block_only", ace.per_tx_bytes, ace.tps);
    row("ace_with_witness", combined_bytes, combined_tps);
    if let Some(f) = implemented {
        let bw = p.bandwidth_bytes_per_s;
        let both = f.block_record_bytes + f.witness_bundle_bytes;
        row(
            "implemented_block_only",
            f.block_record_bytes,
            bw / f.block_record_bytes,
        );
        row("implemented_with_witness", both, bw / both);
    }
    t
}

pub fn hardware_table() -> Table {
    let mut t = Table::new(
        "hardware",
        "Hardware requirements by role",
        &[
            ("component", "Component"),
            ("solana_validator", "Solana validator"),
            ("ace_validator", "ACE validator (non-builder)"),
            ("ace_builder", "ACE builder"),
        ],
    );
    let rows: [[&str; 4]; 5] = [
        [
            "CPU",
            "24+ cores (~$2,000)",
            "16+ cores (~$1,500)",
            "24+ cores (~$2,000)",
        ],
        [
            "RAM",
            "512 GB+ (~$3,000)",
            "256-512 GB (~$1,500-3,000)",
            "512 GB+ (~$3,000)",
        ],
        ["GPU", "Required (~$2,000)", "Not needed ($0)", "Required (~$2,000)"],
        ["Total", "~$7,500+", "~$3,500-5,000", "~$7,500"],
        ["Monthly ops", "$1,000-3,000", "$600-2,000", "$1,000-3,000"],
    ];
    for r in rows {
        t.push(r.iter().map(|s| Cell::same(*s)).collect());
    }
    t
}

pub fn all_tables(p: &CostModelParams, implemented: Option<ImplementedFootprint>) -> Vec<Table> {
    vec![
        block_verify_table(p),
        auth_data_table(p),
        bandwidth_table(p, implemented),
        hardware_table(),
    ]
}
