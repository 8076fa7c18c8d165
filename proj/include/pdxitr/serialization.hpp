#pragma once

#include "pdxitr/evaluation.hpp"
#include "pdxitr/itr.hpp"
#include "pdxitr/superlearner.hpp"

#include <iosfwd>

namespace pdxitr {

// Versioned, tab-separated text formats. Doubles are written with 17
// significant digits so reading them back is exact.

void write_tree_itr(std::ostream& os, const TreeItr& itr);
TreeItr read_tree_itr(std::istream& is);

void write_flat_itr(std::ostream& os, const FlatItr& itr);
FlatItr read_flat_itr(std::istream& is);

void write_superlearner(std::ostream& os, const SuperLearner& sl);
SuperLearner read_superlearner(std::istream& is);

/// Everything needed to recommend for new lines without refitting.
void write_fitted_method(std::ostream& os, const FittedMethod& fitted);
FittedMethod read_fitted_method(std::istream& is);

}  // namespace pdxitr
