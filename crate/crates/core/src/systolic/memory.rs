use crate::error::{Error, Result};
use crate::model::QuantizedModel;
use crate::optimizer::VoltageAssignment;
use crate::scalar::Real;

/// Selection bits needed for `levels` voltage levels.
pub fn v_bits_for(levels: usize) -> u32 {
    if levels <= 1 {
        0
    } else {
        usize::BITS - (levels - 1).leading_zeros()
    }
}

/// `(code << 8) | weight` with the weight in 8-bit two's complement.
pub fn encode_word(weight: i8, code: u32, v_bits: u32) -> Result<u32> {
    if v_bits < 32 && u64::from(code) >= 1u64 << v_bits {
        return Err(Error::CodeOverflow { code, v_bits });
    }
    Ok((code << 8) | u32::from(weight as u8))
}

/// Inverse of [`encode_word`].
pub fn decode_voltage(word: u32, v_bits: u32) -> Result<(i8, u32)> {
    let width = 8 + v_bits;
    if width < 32 && word >> width != 0 {
        return Err(Error::OversizedWord { word, width });
    }
    Ok(((word & 0xff) as u8 as i8, word >> 8))
}

/// Encoded weights of one layer, column-major: column `c` holds the
/// `rows` weights of neuron `c`, all tagged with that neuron's voltage code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMemory {
    array_n: usize,
    v_bits: u32,
    rows: usize,
    cols: usize,
    words: Vec<u32>,
}

impl LayerMemory {
    /// Build from column-major words, checking width and per-column codes.
    pub fn new(
        array_n: usize,
        v_bits: u32,
        rows: usize,
        cols: usize,
        words: Vec<u32>,
    ) -> Result<Self> {
        if array_n == 0 || rows == 0 || cols == 0 {
            return Err(Error::Dimension("memory dimensions must be nonzero".into()));
        }
        if words.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} words for a {rows}x{cols} layer",
                words.len()
            )));
        }
        for c in 0..cols {
            let col = &words[c * rows..(c + 1) * rows];
            let code = decode_voltage(col[0], v_bits)?.1;
            for &w in col {
                if decode_voltage(w, v_bits)?.1 != code {
                    return Err(Error::Parse(format!("column {c} mixes voltage codes")));
                }
            }
        }
        Ok(Self {
            array_n,
            v_bits,
            rows,
            cols,
            words,
        })
    }

    pub fn array_n(&self) -> usize {
        self.array_n
    }

    pub fn v_bits(&self) -> u32 {
        self.v_bits
    }

    /// Column height (fan-in).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns (neurons).
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn word(&self, col: usize, row: usize) -> u32 {
        self.words[col * self.rows + row]
    }

    pub fn weight(&self, col: usize, row: usize) -> i8 {
        (self.word(col, row) & 0xff) as u8 as i8
    }

    pub fn code(&self, col: usize) -> u32 {
        self.word(col, 0) >> 8
    }

    pub fn column_weights(&self, col: usize) -> impl Iterator<Item = i8> + '_ {
        self.words[col * self.rows..(col + 1) * self.rows]
            .iter()
            .map(|&w| (w & 0xff) as u8 as i8)
    }

    pub fn row_blocks(&self) -> usize {
        self.rows.div_ceil(self.array_n)
    }

    pub fn col_blocks(&self) -> usize {
        self.cols.div_ceil(self.array_n)
    }

    /// Tiles in processing order `(col_block, row_block)`, each given as
    /// column and row ranges.
    pub fn tiles(
        &self,
    ) -> impl Iterator<Item = (std::ops::Range<usize>, std::ops::Range<usize>)> + '_ {
        let n = self.array_n;
        (0..self.col_blocks()).flat_map(move |cb| {
            (0..self.row_blocks()).map(move |rb| {
                (
                    cb * n..((cb + 1) * n).min(self.cols),
                    rb * n..((rb + 1) * n).min(self.rows),
                )
            })
        })
    }
}

/// Weight memory of a whole model on an `array_n x array_n` array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightMemory {
    array_n: usize,
    v_bits: u32,
    layers: Vec<LayerMemory>,
}

impl WeightMemory {
    pub fn array_n(&self) -> usize {
        self.array_n
    }

    pub fn v_bits(&self) -> u32 {
        self.v_bits
    }

    pub fn layers(&self) -> &[LayerMemory] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerMemory {
        &self.layers[l]
    }

    /// Voltage code of every neuron, in global neuron order.
    pub fn codes(&self) -> Vec<u32> {
        self.layers
            .iter()
            .flat_map(|l| (0..l.cols()).map(move |c| l.code(c)))
            .collect()
    }

    /// One binary word per line, `8 + v_bits` digits, tile by tile
    /// (layer, column block, row block) and column-major inside a tile.
    pub fn dump(&self) -> String {
        let width = (8 + self.v_bits) as usize;
        let mut out = String::new();
        for layer in &self.layers {
            for (cols, rows) in layer.tiles() {
                for c in cols {
                    for r in rows.clone() {
                        out.push_str(&format!("{:0width$b}\n", layer.word(c, r)));
                    }
                }
            }
        }
        out
    }

    /// Rebuild a memory from [`WeightMemory::dump`] output for the given
    /// model shape.
    pub fn from_dump(
        model: &QuantizedModel,
        array_n: usize,
        v_bits: u32,
        text: &str,
    ) -> Result<Self> {
        let width = (8 + v_bits) as usize;
        let mut lines = text.lines().enumerate();
        let mut layers = Vec::with_capacity(model.layers().len());
        for layer in model.layers() {
            let (rows, cols) = (layer.fan_in(), layer.width());
            let mut words = vec![0u32; rows * cols];
            let shape = LayerMemory {
                array_n,
                v_bits,
                rows,
                cols,
                words: Vec::new(),
            };
            for (cr, rr) in shape.tiles() {
                for c in cr {
                    for r in rr.clone() {
                        let (i, line) = lines.next().ok_or_else(|| {
                            Error::Truncated("weight-memory dump ended early".into())
                        })?;
                        let line = line.trim();
                        if line.len() != width || !line.bytes().all(|b| b == b'0' || b == b'1') {
                            return Err(Error::Parse(format!(
                                "dump line {}: expected {width} binary digits",
                                i + 1
                            )));
                        }
                        words[c * rows + r] = u32::from_str_radix(line, 2)
                            .map_err(|e| Error::Parse(format!("dump line {}: {e}", i + 1)))?;
                    }
                }
            }
            layers.push(LayerMemory::new(array_n, v_bits, rows, cols, words)?);
        }
        if let Some((i, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Parse(format!("unexpected dump line {}", i + 1)));
        }
        Ok(Self {
            array_n,
            v_bits,
            layers,
        })
    }
}

/// Encode every layer's weights with the voltage code assigned to each
/// neuron (column).
pub fn encode_weight_memory<T: Real>(
    model: &QuantizedModel,
    assignment: &VoltageAssignment<T>,
    array_n: usize,
    v_bits: u32,
) -> Result<WeightMemory> {
    if array_n == 0 {
        return Err(Error::InvalidParameter(
            "array size must be positive".into(),
        ));
    }
    let mut codes = vec![None; model.neuron_count()];
    for (&id, &code) in assignment.neuron_ids.iter().zip(&assignment.codes) {
        *codes.get_mut(id).ok_or(Error::InvalidNeuron(id))? = Some(code);
    }
    let mut layers = Vec::with_capacity(model.layers().len());
    for (l, layer) in model.layers().iter().enumerate() {
        let offset = model.layer_offset(l);
        let mut words = Vec::with_capacity(layer.width() * layer.fan_in());
        for j in 0..layer.width() {
            let code = codes[offset + j].ok_or(Error::MissingNeuron(offset + j))?;
            for &w in layer.row(j) {
                words.push(encode_word(w, code, v_bits)?);
            }
        }
        layers.push(LayerMemory {
            array_n,
            v_bits,
            rows: layer.fan_in(),
            cols: layer.width(),
            words,
        });
    }
    Ok(WeightMemory {
        array_n,
        v_bits,
        layers,
    })
}
