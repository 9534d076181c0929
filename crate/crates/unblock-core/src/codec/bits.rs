//! Entropy-coded segment bit I/O with 0xFF byte stuffing.

use super::CodecError;

/// MSB-first bit writer. Emits `0x00` after every literal `0xFF` byte.
#[derive(Debug, Default)]
pub struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_bits(&mut self, value: u32, count: u32) {
        debug_assert!(count <= 16);
        debug_assert!(count == 32 || value < (1 << count));
        self.acc = (self.acc << count) | value;
        self.nbits += count;
        while self.nbits >= 8 {
            let byte = ((self.acc >> (self.nbits - 8)) & 0xFF) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    /// Pads the final partial byte with 1-bits and returns the stuffed stream.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put_bits((1 << pad) - 1, pad);
        }
        self.out
    }
}

/// MSB-first bit reader over a stuffed entropy-coded segment.
///
/// Stops at any marker (`0xFF` followed by non-zero); attempts to read past
/// it fail with [`CodecError::TruncatedStream`].
#[derive(Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0, acc: 0, nbits: 0 }
    }

    fn refill(&mut self) -> Result<(), CodecError> {
        if self.pos >= self.data.len() {
            return Err(CodecError::TruncatedStream);
        }
        let byte = self.data[self.pos];
        if byte == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => self.pos += 2, // stuffed literal 0xFF
                _ => return Err(CodecError::TruncatedStream),
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | byte as u32;
        self.nbits += 8;
        Ok(())
    }

    pub fn get_bit(&mut self) -> Result<u32, CodecError> {
        if self.nbits == 0 {
            self.refill()?;
        }
        self.nbits -= 1;
        let bit = (self.acc >> self.nbits) & 1;
        self.acc &= (1 << self.nbits) - 1;
        Ok(bit)
    }

    pub fn get_bits(&mut self, count: u32) -> Result<u32, CodecError> {
        let mut v = 0;
        for _ in 0..count {
            v = (v << 1) | self.get_bit()?;
        }
        Ok(v)
    }

    /// Bytes consumed so far, counting any partially-read byte as consumed.
    pub fn bytes_consumed(&self) -> usize {
        self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stuffing_after_ff() {
        let mut w = BitWriter::new();
        w.put_bits(0xFF, 8);
        w.put_bits(0xAB, 8);
        assert_eq!(w.finish(), vec![0xFF, 0x00, 0xAB]);
    }

    #[test]
    fn pad_with_ones() {
        let mut w = BitWriter::new();
        w.put_bits(0b101, 3);
        assert_eq!(w.finish(), vec![0b1011_1111]);
    }

    #[test]
    fn roundtrip_bits() {
        let mut w = BitWriter::new();
        let values = [(0x3u32, 2u32), (0x1FF, 9), (0, 1), (0xFFFF, 16), (0x5, 4)];
        for &(v, n) in &values {
            w.put_bits(v, n);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for &(v, n) in &values {
            assert_eq!(r.get_bits(n).unwrap(), v);
        }
    }

    #[test]
    fn marker_stops_reading() {
        let data = [0xFF, 0xD9]; // EOI, not a stuffed byte
        let mut r = BitReader::new(&data);
        assert!(r.get_bit().is_err());
    }
}
