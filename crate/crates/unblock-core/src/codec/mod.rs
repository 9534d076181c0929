//! From-scratch baseline JPEG (JFIF) encoder/decoder.
//!
//! Scope is deliberately narrow: 8-bit baseline sequential, 4:2:0
//! subsampling, the standard Annex K quantization and Huffman tables, no
//! restart markers. Inputs must have even dimensions of at least 8.

pub mod bits;
pub mod color;
pub mod dct;
pub mod huffman;
pub mod quant;
pub mod zigzag;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use dct::{dct_2d, idct_2d};
pub use quant::{dequantize_block, quantize_block, scale_quant_tables, QuantTableSet};
pub use zigzag::{inverse_zigzag, zigzag};

use crate::image::{ColorSpace, ImageError, ImageTensor, PixelRange};
use bits::{BitReader, BitWriter};
use huffman::{
    amplitude_bits, category, extend, HuffDecoder, HuffEncoder, AC_CHROMA, AC_LUMA, DC_CHROMA,
    DC_LUMA,
};
use ndarray::{Array2, Array3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("quality {0} outside [1, 100]")]
    QualityOutOfRange(u8),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("chroma plane dims {got:?} do not match luma {expected:?}")]
    PlaneDimsMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("entropy-coded data ended early")]
    TruncatedStream,
    #[error("stream does not start with SOI marker")]
    MissingSoi,
    #[error("invalid Huffman code in entropy-coded data")]
    InvalidHuffmanCode,
    #[error("coefficient {value} exceeds the baseline category range")]
    CoefficientRange { value: i32 },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
}

/// Entropy-coded baseline JFIF stream plus size metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegBitstream {
    pub bytes: Vec<u8>,
    pub source_dims: (usize, usize),
}

impl JpegBitstream {
    pub fn encoded_size(&self) -> usize {
        self.bytes.len()
    }
}

/// 8×8 blocks of one component, raster block order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneBlocks<T> {
    pub blocks: Vec<[T; 64]>,
    /// Blocks per column (vertical count).
    pub rows: usize,
    /// Blocks per row (horizontal count).
    pub cols: usize,
}

impl<T: Copy + Default> PlaneBlocks<T> {
    pub fn block(&self, r: usize, c: usize) -> &[T; 64] {
        &self.blocks[r * self.cols + c]
    }
}

/// Per-component block storage: `[Y, Cb, Cr]` after 4:2:0 subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid<T> {
    pub comps: [PlaneBlocks<T>; 3],
}

/// Y plane at full resolution plus half-size chroma planes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampledPlanes {
    pub y: Array2<f32>,
    pub cb: Array2<f32>,
    pub cr: Array2<f32>,
}

/// 4:2:0 subsampling: each chroma sample is the rounded mean of its 2×2
/// source neighborhood (round half up).
pub fn subsample_420(img: &ImageTensor) -> Result<SubsampledPlanes, CodecError> {
    img.expect_colorspace(ColorSpace::YCbCr)?;
    let (h, w) = (img.height(), img.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(ImageError::OddDimensions { h, w }.into());
    }
    let y = Array2::from_shape_fn((h, w), |(r, c)| img.data[[r, c, 0]]);
    let mean2x2 = |chan: usize, r: usize, c: usize| {
        let s = img.data[[2 * r, 2 * c, chan]] as u32
            + img.data[[2 * r, 2 * c + 1, chan]] as u32
            + img.data[[2 * r + 1, 2 * c, chan]] as u32
            + img.data[[2 * r + 1, 2 * c + 1, chan]] as u32;
        ((s + 2) / 4) as f32
    };
    let cb = Array2::from_shape_fn((h / 2, w / 2), |(r, c)| mean2x2(1, r, c));
    let cr = Array2::from_shape_fn((h / 2, w / 2), |(r, c)| mean2x2(2, r, c));
    Ok(SubsampledPlanes { y, cb, cr })
}

/// Triangle-filter 2× upsampling of one chroma plane, bit-compatible with
/// the libjpeg "fancy" h2v2 upsampler so reference decoders agree with our
/// pixel output within ±1.
fn upsample_plane_2x(plane: &Array2<f32>, h: usize, w: usize) -> Array2<f32> {
    let (ph, pw) = plane.dim();
    let at = |r: isize, c: isize| -> i32 {
        plane[[r.clamp(0, ph as isize - 1) as usize, c.clamp(0, pw as isize - 1) as usize]] as i32
    };
    let mut out = Array2::zeros((h, w));
    for r in 0..h {
        let ir = (r / 2) as isize;
        // vertical neighbor: row above for even output rows, below for odd
        let fr = if r % 2 == 0 { ir - 1 } else { ir + 1 };
        let colsum = |c: isize| 3 * at(ir, c) + at(fr, c);
        for c in 0..w {
            let ic = (c / 2) as isize;
            let v = if c == 0 {
                (colsum(ic) * 4 + 8) >> 4
            } else if c == w - 1 && w % 2 == 0 {
                (colsum(ic) * 4 + 7) >> 4
            } else if c % 2 == 0 {
                (3 * colsum(ic) + colsum(ic - 1) + 8) >> 4
            } else {
                (3 * colsum(ic) + colsum(ic + 1) + 7) >> 4
            };
            out[[r, c]] = v as f32;
        }
    }
    out
}

/// Chroma 2× upsampling back to a full YCbCr image (triangle filter).
pub fn upsample_420(planes: &SubsampledPlanes) -> Result<ImageTensor, CodecError> {
    let (h, w) = planes.y.dim();
    let expected = (h / 2, w / 2);
    for plane in [&planes.cb, &planes.cr] {
        if plane.dim() != expected {
            return Err(CodecError::PlaneDimsMismatch { expected, got: plane.dim() });
        }
    }
    let cb = upsample_plane_2x(&planes.cb, h, w);
    let cr = upsample_plane_2x(&planes.cr, h, w);
    let mut out = Array3::zeros((h, w, 3));
    for r in 0..h {
        for c in 0..w {
            out[[r, c, 0]] = planes.y[[r, c]];
            out[[r, c, 1]] = cb[[r, c]];
            out[[r, c, 2]] = cr[[r, c]];
        }
    }
    Ok(ImageTensor::new(out, PixelRange::Byte, ColorSpace::YCbCr))
}

/// Splits a sample plane into 8×8 blocks; edge samples are replicated when
/// the plane size is not a multiple of 8.
pub fn plane_to_blocks(plane: &Array2<f32>) -> PlaneBlocks<f32> {
    let (h, w) = plane.dim();
    let rows = h.div_ceil(8);
    let cols = w.div_ceil(8);
    let mut blocks = Vec::with_capacity(rows * cols);
    for br in 0..rows {
        for bc in 0..cols {
            let block: [f32; 64] = std::array::from_fn(|i| {
                let r = (br * 8 + i / 8).min(h - 1);
                let c = (bc * 8 + i % 8).min(w - 1);
                plane[[r, c]]
            });
            blocks.push(block);
        }
    }
    PlaneBlocks { blocks, rows, cols }
}

/// Reassembles a plane of the given size from its 8×8 blocks.
pub fn blocks_to_plane(blocks: &PlaneBlocks<f32>, h: usize, w: usize) -> Array2<f32> {
    let mut plane = Array2::zeros((h, w));
    for br in 0..blocks.rows {
        for bc in 0..blocks.cols {
            let block = blocks.block(br, bc);
            for i in 0..64 {
                let r = br * 8 + i / 8;
                let c = bc * 8 + i % 8;
                if r < h && c < w {
                    plane[[r, c]] = block[i];
                }
            }
        }
    }
    plane
}

fn map_grid<A: Copy, B: Copy>(grid: &BlockGrid<A>, f: impl Fn(usize, &[A; 64]) -> [B; 64]) -> BlockGrid<B> {
    let comps = std::array::from_fn(|ci| {
        let p = &grid.comps[ci];
        PlaneBlocks { blocks: p.blocks.iter().map(|b| f(ci, b)).collect(), rows: p.rows, cols: p.cols }
    });
    BlockGrid { comps }
}

/// Forward DCT over every block of every component.
pub fn dct_grid(grid: &BlockGrid<f32>) -> BlockGrid<f32> {
    map_grid(grid, |_, b| dct_2d(b))
}

/// Quantizes a DCT-domain grid with the component-appropriate table.
pub fn quantize(grid: &BlockGrid<f32>, tables: &QuantTableSet) -> BlockGrid<i32> {
    map_grid(grid, |ci, b| {
        quantize_block(b, if ci == 0 { &tables.luma } else { &tables.chroma })
    })
}

/// Inverse of [`quantize`] up to rounding.
pub fn dequantize(grid: &BlockGrid<i32>, tables: &QuantTableSet) -> BlockGrid<f32> {
    map_grid(grid, |ci, b| {
        dequantize_block(b, if ci == 0 { &tables.luma } else { &tables.chroma })
    })
}

// ---------------------------------------------------------------------------
// JFIF marker layer
// ---------------------------------------------------------------------------

fn push_marker(out: &mut Vec<u8>, marker: u8) {
    out.push(0xFF);
    out.push(marker);
}

fn push_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    push_marker(out, marker);
    let len = (payload.len() + 2) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
}

fn emit_headers(out: &mut Vec<u8>, tables: &QuantTableSet, h: usize, w: usize) {
    push_marker(out, 0xD8); // SOI

    // APP0 / JFIF 1.01, no thumbnail
    let mut app0 = Vec::new();
    app0.extend_from_slice(b"JFIF\0");
    app0.extend_from_slice(&[1, 1, 0, 0, 1, 0, 1, 0, 0]);
    push_segment(out, 0xE0, &app0);

    // DQT: both tables, zigzag order, 8-bit precision
    for (id, table) in [(0u8, &tables.luma), (1u8, &tables.chroma)] {
        let mut dqt = vec![id];
        let zz = zigzag(table);
        dqt.extend(zz.iter().map(|&v| v as u8));
        push_segment(out, 0xDB, &dqt);
    }

    // SOF0: 8-bit, 3 components, Y 2x2 / Cb 1x1 / Cr 1x1
    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    sof.push(3);
    sof.extend_from_slice(&[1, 0x22, 0]);
    sof.extend_from_slice(&[2, 0x11, 1]);
    sof.extend_from_slice(&[3, 0x11, 1]);
    push_segment(out, 0xC0, &sof);

    // DHT: the four standard tables
    for (class_id, spec) in [
        (0x00u8, &DC_LUMA),
        (0x10, &AC_LUMA),
        (0x01, &DC_CHROMA),
        (0x11, &AC_CHROMA),
    ] {
        let mut dht = vec![class_id];
        dht.extend_from_slice(&spec.bits);
        dht.extend_from_slice(spec.values);
        push_segment(out, 0xC4, &dht);
    }

    // SOS
    let sos = [3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0].to_vec();
    push_segment(out, 0xDA, &sos);
}

fn encode_block(
    w: &mut BitWriter,
    block: &[i32; 64],
    pred: &mut i32,
    dc: &HuffEncoder,
    ac: &HuffEncoder,
) -> Result<(), CodecError> {
    let scan = zigzag(block);
    let diff = scan[0] - *pred;
    *pred = scan[0];
    let size = category(diff);
    if size > 11 {
        return Err(CodecError::CoefficientRange { value: diff });
    }
    dc.emit(w, size);
    if size > 0 {
        w.put_bits(amplitude_bits(diff, size), size as u32);
    }

    let mut run = 0u32;
    for &v in &scan[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            ac.emit(w, 0xF0); // ZRL
            run -= 16;
        }
        let size = category(v);
        if size > 10 {
            return Err(CodecError::CoefficientRange { value: v });
        }
        ac.emit(w, ((run as u8) << 4) | size);
        w.put_bits(amplitude_bits(v, size), size as u32);
        run = 0;
    }
    if run > 0 {
        ac.emit(w, 0x00); // EOB
    }
    Ok(())
}

fn decode_block(
    r: &mut BitReader,
    pred: &mut i32,
    dc: &HuffDecoder,
    ac: &HuffDecoder,
) -> Result<[i32; 64], CodecError> {
    let mut scan = [0i32; 64];
    let size = dc.decode(r)?;
    let diff = extend(r.get_bits(size as u32)?, size);
    *pred += diff;
    scan[0] = *pred;

    let mut k = 1usize;
    while k < 64 {
        let rs = ac.decode(r)?;
        let run = (rs >> 4) as usize;
        let size = rs & 0x0F;
        if size == 0 {
            if run == 15 {
                k += 16; // ZRL
                continue;
            }
            break; // EOB
        }
        k += run;
        if k >= 64 {
            return Err(CodecError::BadHeader("AC run past end of block".into()));
        }
        scan[k] = extend(r.get_bits(size as u32)?, size);
        k += 1;
    }
    Ok(inverse_zigzag(&scan))
}

/// Encodes a quantized grid into a complete baseline JFIF stream.
///
/// The scan interleaves 16×16 MCUs (four Y blocks, one Cb, one Cr); when a
/// component grid does not fill the MCU lattice the nearest edge block is
/// re-emitted as padding, which decoders crop away.
pub fn encode_entropy(
    grid: &BlockGrid<i32>,
    tables: &QuantTableSet,
    source_dims: (usize, usize),
) -> Result<JpegBitstream, CodecError> {
    let (h, w) = source_dims;
    let mut out = Vec::new();
    emit_headers(&mut out, tables, h, w);

    let dc_l = HuffEncoder::build(&DC_LUMA);
    let ac_l = HuffEncoder::build(&AC_LUMA);
    let dc_c = HuffEncoder::build(&DC_CHROMA);
    let ac_c = HuffEncoder::build(&AC_CHROMA);

    let mcu_rows = h.div_ceil(16);
    let mcu_cols = w.div_ceil(16);
    let mut bw = BitWriter::new();
    let mut pred = [0i32; 3];
    let yp = &grid.comps[0];
    for mr in 0..mcu_rows {
        for mc in 0..mcu_cols {
            for dy in 0..2 {
                for dx in 0..2 {
                    let br = (2 * mr + dy).min(yp.rows - 1);
                    let bc = (2 * mc + dx).min(yp.cols - 1);
                    encode_block(&mut bw, yp.block(br, bc), &mut pred[0], &dc_l, &ac_l)?;
                }
            }
            for ci in 1..3 {
                let p = &grid.comps[ci];
                let block = p.block(mr.min(p.rows - 1), mc.min(p.cols - 1));
                encode_block(&mut bw, block, &mut pred[ci], &dc_c, &ac_c)?;
            }
        }
    }
    out.extend_from_slice(&bw.finish());
    push_marker(&mut out, 0xD9); // EOI
    Ok(JpegBitstream { bytes: out, source_dims })
}

/// Everything recovered from a parsed stream.
#[derive(Debug, Clone)]
pub struct DecodedStream {
    pub grid: BlockGrid<i32>,
    pub tables: QuantTableSet,
    pub dims: (usize, usize),
}

struct HeaderState {
    qtables: [Option<[u16; 64]>; 4],
    htables: [Option<HuffDecoder>; 8],
    sof: Option<((usize, usize), [(u8, u8, u8); 3])>,
    scan_tables: Option<[(u8, u8); 3]>,
}

fn read_u16(b: &[u8], at: usize) -> Result<u16, CodecError> {
    if at + 2 > b.len() {
        return Err(CodecError::TruncatedStream);
    }
    Ok(u16::from_be_bytes([b[at], b[at + 1]]))
}

/// Parses a baseline JFIF stream back into its quantized block grid.
pub fn decode_entropy(bytes: &[u8]) -> Result<DecodedStream, CodecError> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8 {
        return Err(CodecError::MissingSoi);
    }
    let mut st = HeaderState {
        qtables: [None, None, None, None],
        htables: [None, None, None, None, None, None, None, None],
        sof: None,
        scan_tables: None,
    };
    let mut pos = 2usize;
    loop {
        if pos + 2 > bytes.len() {
            return Err(CodecError::TruncatedStream);
        }
        if bytes[pos] != 0xFF {
            return Err(CodecError::BadHeader(format!("expected marker at byte {pos}")));
        }
        let marker = bytes[pos + 1];
        pos += 2;
        match marker {
            0xD9 => return Err(CodecError::BadHeader("EOI before scan data".into())),
            0x01 | 0xD0..=0xD7 => continue, // standalone markers
            0xDA => {
                let len = read_u16(bytes, pos)? as usize;
                parse_sos(&bytes[pos + 2..pos + len], &mut st)?;
                pos += len;
                break;
            }
            _ => {
                let len = read_u16(bytes, pos)? as usize;
                if pos + len > bytes.len() {
                    return Err(CodecError::TruncatedStream);
                }
                let payload = &bytes[pos + 2..pos + len];
                match marker {
                    0xDB => parse_dqt(payload, &mut st)?,
                    0xC4 => parse_dht(payload, &mut st)?,
                    0xC0 => parse_sof0(payload, &mut st)?,
                    0xC1..=0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                        return Err(CodecError::Unsupported(format!(
                            "non-baseline frame marker 0xFF{marker:02X}"
                        )))
                    }
                    _ => {} // APPn, COM, etc.
                }
                pos += len;
            }
        }
    }

    let ((h, w), comps) = st.sof.ok_or_else(|| CodecError::BadHeader("missing SOF0".into()))?;
    let scan = st.scan_tables.ok_or_else(|| CodecError::BadHeader("missing SOS".into()))?;
    if comps[0].1 != 0x22 || comps[1].1 != 0x11 || comps[2].1 != 0x11 {
        return Err(CodecError::Unsupported("only 4:2:0 sampling is supported".into()));
    }

    let luma_q = st.qtables[comps[0].2 as usize]
        .ok_or_else(|| CodecError::BadHeader("missing luma DQT".into()))?;
    let chroma_q = st.qtables[comps[1].2 as usize]
        .ok_or_else(|| CodecError::BadHeader("missing chroma DQT".into()))?;
    let tables = QuantTableSet { luma: luma_q, chroma: chroma_q, quality: 0 };

    let decoder = |class: u8, id: u8| -> Result<&HuffDecoder, CodecError> {
        st.htables[(class * 4 + id) as usize]
            .as_ref()
            .ok_or_else(|| CodecError::BadHeader(format!("missing DHT class {class} id {id}")))
    };

    let mut comps_out: Vec<PlaneBlocks<i32>> = (0..3)
        .map(|ci| {
            let (ph, pw) = if ci == 0 { (h, w) } else { (h.div_ceil(2), w.div_ceil(2)) };
            let rows = ph.div_ceil(8);
            let cols = pw.div_ceil(8);
            PlaneBlocks { blocks: vec![[0i32; 64]; rows * cols], rows, cols }
        })
        .collect();

    let mut br = BitReader::new(&bytes[pos..]);
    let mut pred = [0i32; 3];
    let mcu_rows = h.div_ceil(16);
    let mcu_cols = w.div_ceil(16);
    for mr in 0..mcu_rows {
        for mc in 0..mcu_cols {
            for dy in 0..2 {
                for dx in 0..2 {
                    let block = decode_block(
                        &mut br,
                        &mut pred[0],
                        decoder(0, scan[0].0)?,
                        decoder(1, scan[0].1)?,
                    )?;
                    let p = &mut comps_out[0];
                    let (r, c) = (2 * mr + dy, 2 * mc + dx);
                    if r < p.rows && c < p.cols {
                        p.blocks[r * p.cols + c] = block;
                    }
                }
            }
            for ci in 1..3 {
                let block = decode_block(
                    &mut br,
                    &mut pred[ci],
                    decoder(0, scan[ci].0)?,
                    decoder(1, scan[ci].1)?,
                )?;
                let p = &mut comps_out[ci];
                if mr < p.rows && mc < p.cols {
                    p.blocks[mr * p.cols + mc] = block;
                }
            }
        }
    }

    let grid = BlockGrid {
        comps: [comps_out[0].clone(), comps_out[1].clone(), comps_out[2].clone()],
    };
    Ok(DecodedStream { grid, tables, dims: (h, w) })
}

fn parse_dqt(mut payload: &[u8], st: &mut HeaderState) -> Result<(), CodecError> {
    while !payload.is_empty() {
        let pq = payload[0] >> 4;
        let id = (payload[0] & 0x0F) as usize;
        if pq != 0 {
            return Err(CodecError::Unsupported("16-bit quantization tables".into()));
        }
        if id > 3 || payload.len() < 65 {
            return Err(CodecError::BadHeader("malformed DQT".into()));
        }
        let zz: [u16; 64] = std::array::from_fn(|i| payload[1 + i] as u16);
        st.qtables[id] = Some(inverse_zigzag(&zz));
        payload = &payload[65..];
    }
    Ok(())
}

fn parse_dht(mut payload: &[u8], st: &mut HeaderState) -> Result<(), CodecError> {
    while !payload.is_empty() {
        if payload.len() < 17 {
            return Err(CodecError::BadHeader("malformed DHT".into()));
        }
        let class = payload[0] >> 4;
        let id = payload[0] & 0x0F;
        if class > 1 || id > 3 {
            return Err(CodecError::BadHeader("bad DHT class/id".into()));
        }
        let bits: [u8; 16] = std::array::from_fn(|i| payload[1 + i]);
        let n: usize = bits.iter().map(|&b| b as usize).sum();
        if payload.len() < 17 + n {
            return Err(CodecError::BadHeader("DHT value list truncated".into()));
        }
        st.htables[(class * 4 + id) as usize] =
            Some(HuffDecoder::build(&bits, &payload[17..17 + n]));
        payload = &payload[17 + n..];
    }
    Ok(())
}

fn parse_sof0(payload: &[u8], st: &mut HeaderState) -> Result<(), CodecError> {
    if payload.len() < 6 {
        return Err(CodecError::BadHeader("malformed SOF0".into()));
    }
    if payload[0] != 8 {
        return Err(CodecError::Unsupported("only 8-bit precision".into()));
    }
    let h = u16::from_be_bytes([payload[1], payload[2]]) as usize;
    let w = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    let nc = payload[5] as usize;
    if nc != 3 || payload.len() < 6 + 3 * nc {
        return Err(CodecError::Unsupported("expected exactly 3 components".into()));
    }
    let comps: [(u8, u8, u8); 3] = std::array::from_fn(|i| {
        (payload[6 + 3 * i], payload[7 + 3 * i], payload[8 + 3 * i])
    });
    st.sof = Some(((h, w), comps));
    Ok(())
}

fn parse_sos(payload: &[u8], st: &mut HeaderState) -> Result<(), CodecError> {
    if payload.is_empty() || payload[0] != 3 || payload.len() < 1 + 2 * 3 + 3 {
        return Err(CodecError::BadHeader("malformed SOS".into()));
    }
    let tables: [(u8, u8); 3] =
        std::array::from_fn(|i| (payload[2 + 2 * i] >> 4, payload[2 + 2 * i] & 0x0F));
    st.scan_tables = Some(tables);
    Ok(())
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Full encode pipeline: color conversion, 4:2:0 subsampling, blocked DCT,
/// quantization, zigzag + entropy coding.
pub fn compress(img: &ImageTensor, quality: u8) -> Result<JpegBitstream, CodecError> {
    img.expect_colorspace(ColorSpace::Rgb)?;
    img.expect_range(PixelRange::Byte)?;
    let (h, w) = (img.height(), img.width());
    if h < 8 || w < 8 {
        return Err(ImageError::TooSmall { h, w }.into());
    }
    let tables = scale_quant_tables(quality)?;
    let ycc = rgb_to_ycbcr(img)?;
    let planes = subsample_420(&ycc)?;
    let grid = BlockGrid {
        comps: [
            plane_to_blocks(&planes.y),
            plane_to_blocks(&planes.cb),
            plane_to_blocks(&planes.cr),
        ],
    };
    let coeffs = dct_grid(&grid);
    let quantized = quantize(&coeffs, &tables);
    encode_entropy(&quantized, &tables, (h, w))
}

/// Full decode pipeline, inverse of [`compress`] up to quantization loss.
pub fn decompress(bs: &JpegBitstream) -> Result<ImageTensor, CodecError> {
    decompress_bytes(&bs.bytes)
}

/// Decodes any supported baseline JFIF byte stream.
pub fn decompress_bytes(bytes: &[u8]) -> Result<ImageTensor, CodecError> {
    let decoded = decode_entropy(bytes)?;
    let (h, w) = decoded.dims;
    let fm_luma = dct::aan_dequant_table(&decoded.tables.luma);
    let fm_chroma = dct::aan_dequant_table(&decoded.tables.chroma);
    let spatial = map_grid(&decoded.grid, |ci, b| {
        dct::idct_2d_aan(b, if ci == 0 { &fm_luma } else { &fm_chroma })
    });
    let planes = SubsampledPlanes {
        y: blocks_to_plane(&spatial.comps[0], h, w),
        cb: blocks_to_plane(&spatial.comps[1], h.div_ceil(2), w.div_ceil(2)),
        cr: blocks_to_plane(&spatial.comps[2], h.div_ceil(2), w.div_ceil(2)),
    };
    let ycc = upsample_420(&planes)?;
    Ok(ycbcr_to_rgb(&ycc)?)
}
