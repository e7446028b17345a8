//! CRC-32/ISO-HDLC (reflected 0xEDB88320, init and xor-out 0xFFFFFFFF).

/// One-shot checksum.
pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

/// Incremental checksum; `finish` after any sequence of `update`s equals
/// `crc32` over the concatenated input.
#[derive(Debug, Clone, Default)]
pub struct Crc32(crc32fast::Hasher);

impl Crc32 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, data: &[u8]) {
        self.0.update(data);
    }

    pub fn finish(&self) -> u32 {
        self.0.clone().finalize()
    }
}
