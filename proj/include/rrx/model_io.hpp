#pragma once

#include <string>
#include <vector>

#include "rrx/measures.hpp"
#include "rrx/raking.hpp"

namespace rrx {

// A grid plus its declared functions, as stored in model JSON files:
// {"partitions": [{"name", "labels": [...]}, ...],
//  "cells": [{"labels": ["r1", "c2"], "p": 0.2}, ...],
//  "functions": [{"name", "mean": [...], "var": [...], "bound": M}, ...]}
// Cell order in the file fixes the grid's cell order; function vectors align
// with it.
struct Model {
    CellGrid grid;
    std::vector<PiecewiseFunction> functions;
};

Model load_model(const std::string& path);
void save_model(const Model& model, const std::string& path);

// {"targets": [{"partition": "rows", "probs": [...]}, ...]} resolved against
// the grid's partition names; listed order is the raking order.
RakingSchedule load_targets(const std::string& path, const CellGrid& grid);

// Two-way contingency table: header row holds column labels (first field may
// name the row partition), each body row starts with its row label. Tables of
// counts are normalized by their total.
CellGrid read_contingency_csv(const std::string& path);

// All on-disk output goes through a temp file in the target directory followed
// by an atomic rename.
void write_text_atomic(const std::string& path, const std::string& content);

// 17 significant digits: round-trip exact for doubles
std::string format_full(double x);
// human-facing tables
std::string format_short(double x);

}  // namespace rrx
