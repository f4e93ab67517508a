//! Binary network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "EXPNET\0\0"
//! version      u32      1
//! num_experts  u32
//! hidden       u32
//! num_layers   u32      3 (weight matrices)
//! activation   u32      1 = SiLU
//! param_count  u64
//! params       f64 x param_count   w1, b1, w2, b2, w3, b3, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::net::EvictionNet;
use super::MlError;

const MAGIC: &[u8; 8] = b"EXPNET\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const ACTIVATION_SILU: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 5 + 8;

pub fn to_bytes(net: &EvictionNet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + net.num_params() * 8);
    out.extend_from_slice(MAGIC);
    for v in [CHECKPOINT_VERSION, net.num_experts() as u32, net.hidden() as u32, 3, ACTIVATION_SILU] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for s in net.param_slices() {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses a checkpoint. With `expected_experts` set, a network for a
/// different expert count is rejected.
pub fn from_bytes(bytes: &[u8], expected_experts: Option<usize>) -> Result<EvictionNet, MlError> {
    let bad = |m: String| Err(MlError::BadCheckpoint(m));
    if bytes.len() < HEADER_LEN {
        return bad(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return bad("not a network checkpoint (bad magic)".into());
    }
    let version = u32_at(bytes, 8);
    if version != CHECKPOINT_VERSION {
        return bad(format!("unsupported checkpoint version {version}"));
    }
    let experts = u32_at(bytes, 12) as usize;
    let hidden = u32_at(bytes, 16) as usize;
    let layers = u32_at(bytes, 20);
    let activation = u32_at(bytes, 24);
    if layers != 3 || activation != ACTIVATION_SILU {
        return bad(format!("unsupported architecture: {layers} layers, activation tag {activation}"));
    }
    if let Some(want) = expected_experts {
        if want != experts {
            return Err(MlError::ShapeMismatch { expected: want, found: experts });
        }
    }
    let count = u64::from_le_bytes(bytes[28..36].try_into().expect("8 bytes")) as usize;
    let mut net = EvictionNet::zeros(experts, hidden);
    if count != net.num_params() {
        return bad(format!("parameter count {count} does not match shape ({})", net.num_params()));
    }
    if bytes.len() != HEADER_LEN + 8 * count {
        return bad(format!("expected {} bytes, found {}", HEADER_LEN + 8 * count, bytes.len()));
    }
    let mut values = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for s in net.param_slices_mut() {
        for (d, v) in s.iter_mut().zip(&mut values) {
            *d = v;
        }
    }
    Ok(net)
}

pub fn save_net(net: &EvictionNet, path: impl AsRef<Path>) -> Result<(), MlError> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load_net(path: impl AsRef<Path>, expected_experts: Option<usize>) -> Result<EvictionNet, MlError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => MlError::MissingCheckpoint(path.to_path_buf()),
        _ => MlError::Io(e),
    })?;
    from_bytes(&bytes, expected_experts)
}

/// Size in bytes of the parameters stored as 32-bit floats.
pub fn f32_param_bytes(net: &EvictionNet) -> usize {
    net.num_params() * 4
}

pub const SHARED_CHECKPOINT: &str = "shared.ckpt";

pub fn layer_checkpoint_name(layer: usize) -> String {
    format!("layer_{layer}.ckpt")
}

/// One network per model layer; in shared mode every layer points at the same one.
#[derive(Debug, Clone)]
pub struct NetSet {
    nets: Vec<Arc<EvictionNet>>,
    shared: bool,
}

impl NetSet {
    pub fn per_layer(nets: Vec<EvictionNet>) -> Self {
        Self { nets: nets.into_iter().map(Arc::new).collect(), shared: false }
    }

    pub fn shared(net: EvictionNet, num_layers: usize) -> Self {
        let net = Arc::new(net);
        Self { nets: vec![net; num_layers], shared: true }
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn num_layers(&self) -> usize {
        self.nets.len()
    }

    pub fn layer(&self, layer: usize) -> &Arc<EvictionNet> {
        &self.nets[layer]
    }

    /// Writes the checkpoint files into `dir` and returns their paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>, MlError> {
        fs::create_dir_all(dir)?;
        if self.shared {
            let p = dir.join(SHARED_CHECKPOINT);
            save_net(&self.nets[0], &p)?;
            return Ok(vec![p]);
        }
        self.nets
            .iter()
            .enumerate()
            .map(|(l, n)| {
                let p = dir.join(layer_checkpoint_name(l));
                save_net(n, &p).map(|_| p)
            })
            .collect()
    }

    /// Loads `shared.ckpt` if present, otherwise `layer_<l>.ckpt` for every layer.
    pub fn load(dir: &Path, num_layers: usize, num_experts: usize) -> Result<Self, MlError> {
        let shared = dir.join(SHARED_CHECKPOINT);
        if shared.exists() {
            return Ok(Self::shared(load_net(&shared, Some(num_experts))?, num_layers));
        }
        let nets = (0..num_layers)
            .map(|l| load_net(dir.join(layer_checkpoint_name(l)), Some(num_experts)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::per_layer(nets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(e: usize) -> EvictionNet {
        EvictionNet::init(e, 16, &mut ChaCha8Rng::seed_from_u64(e as u64))
    }

    #[test]
    fn round_trip_is_bitwise() {
        let n = net(6);
        let back = from_bytes(&to_bytes(&n), Some(6)).unwrap();
        for (a, b) in n.param_slices().iter().zip(back.param_slices()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.hidden(), 16);
    }

    #[test]
    fn wrong_expert_count_is_shape_mismatch() {
        let bytes = to_bytes(&net(6));
        assert!(matches!(from_bytes(&bytes, Some(8)), Err(MlError::ShapeMismatch { expected: 8, found: 6 })));
    }

    #[test]
    fn corrupt_inputs() {
        let mut bytes = to_bytes(&net(4));
        assert!(from_bytes(&bytes[..20], None).is_err());
        bytes.pop();
        assert!(from_bytes(&bytes, None).is_err());
        let mut bytes = to_bytes(&net(4));
        bytes[8] = 9;
        assert!(matches!(from_bytes(&bytes, None), Err(MlError::BadCheckpoint(m)) if m.contains("version")));
        bytes[0] = b'X';
        assert!(from_bytes(&bytes, None).is_err());
    }

    #[test]
    fn size_for_64_experts() {
        let n = EvictionNet::zeros(64, 128);
        assert_eq!(f32_param_bytes(&n), 165_120);
        assert_eq!(to_bytes(&n).len(), HEADER_LEN + 41_280 * 8);
    }

    #[test]
    fn netset_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = NetSet::per_layer(vec![net(4), net(4)]);
        let paths = set.save(dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let back = NetSet::load(dir.path(), 2, 4).unwrap();
        assert_eq!(**back.layer(1), **set.layer(1));
        assert!(matches!(NetSet::load(dir.path(), 3, 4), Err(MlError::MissingCheckpoint(_))));
        assert!(matches!(NetSet::load(dir.path(), 2, 5), Err(MlError::ShapeMismatch { .. })));
    }
}
