use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};

/// `x·U·yᵀ + W·[x; y]ᵀ + b` for rows `x` (1×d1), `y` (1×d2), `U` (d1×d2),
/// `W` (1×(d1+d2)) and scalar `b`. Returns a 1×1 score.
pub fn bilinear(tape: &mut Tape, x: Var, y: Var, u: Var, w: Var, b: Var) -> Result<Var> {
    let xu = tape.matmul(x, u)?;
    let quad = tape.matmul_t(xu, y)?;
    let xy = tape.concat_cols(&[x, y])?;
    let lin = tape.matmul_t(w, xy)?;
    let s = tape.add(quad, lin)?;
    tape.add(s, b)
}

/// Per-class `x·U_c·yᵀ + W_c·yᵀ` with `U` laid out as d1×(C·d2) (class
/// blocks side by side) and `W` as C×d2. Returns a 1×C row of scores.
pub fn bilinear_label(tape: &mut Tape, x: Var, y: Var, u: Var, w: Var) -> Result<Var> {
    let [classes, d2] = tape.shape(w);
    if tape.shape(u)[1] != classes * d2 || tape.shape(y) != [1, d2] {
        return Err(TensorError::Shape(format!(
            "bilinear_label: U {:?}, W {:?}, y {:?}",
            tape.shape(u),
            tape.shape(w),
            tape.shape(y)
        )));
    }
    let xu = tape.matmul(x, u)?;
    let blocks = tape.reshape(xu, classes, d2)?;
    let prod = tape.mul(blocks, y)?;
    let quad = tape.sum_rows(prod);
    let lin = tape.matmul_t(w, y)?;
    let s = tape.add(quad, lin)?;
    Ok(tape.transpose(s))
}
