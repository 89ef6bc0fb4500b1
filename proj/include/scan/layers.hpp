#pragma once

#include "scan/tape.hpp"
#include "scan/treebank.hpp"

#include <vector>

namespace scan {

/// Unidirectional LSTM over the rows of `input` (T×d_in). Gate blocks in
/// wx (4d×d_in), wh (4d×d) and b (4d×1) are ordered input, forget, cell, output.
/// Returns the T×d hidden states.
Var lstm(Tape& tape, Var input, Var wx, Var wh, Var b);

/// alpha[node][head] is the attention distribution of `node` over its neighbor list.
using GatAlphas = std::vector<std::vector<RowVector>>;

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Attention coefficients of one head for a node with state h_i over its
/// neighbors (rows of neighbor_states): softmax_j LeakyReLU(a^T [W h_i ‖ W h_j]).
/// `w` is the head's (d/L)×d projection and `a` its 2d/L context vector.
RowVector gat_coefficients(const Vector& h_i, const Matrix& neighbor_states, const Matrix& w,
                           const RowVector& a, double slope);

/// One multi-head graph attention layer over a constituency graph.
///
/// `h` holds the n leaf states (n×d). `w` stacks the L head projections
/// row-wise (d×d, head l owns rows [l·d/L, (l+1)·d/L)); `a` holds one context
/// vector per row (L×2d/L). Internal nodes enter their own score with a zero
/// state. Output row i is the concatenation over heads of
/// sigmoid(Σ_j α_ij W_l h_j), giving an (n+m)×d matrix.
Var gat(Tape& tape, Var h, Var w, Var a, const ConstituencyGraph& graph, double slope,
        GatAlphas* alphas = nullptr);

}  // namespace scan
