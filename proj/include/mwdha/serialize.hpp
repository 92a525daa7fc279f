#pragma once

#include <string>

#include "json.hpp"
#include "mwdha/operators.hpp"

namespace mwdha {

using json = nlohmann::json;

json to_json(const Mat& m);
Mat mat_from_json(const json& j);
json to_json(const Cube& q, int d);
Cube cube_from_json(const json& j);
json to_json(const Lattice& lat);
Lattice lattice_from_json(const json& j);

// [{level, coords, signature, value}] with zero coefficients omitted
json to_json(const HaarCoefficients& c);
HaarCoefficients haar_from_json(const json& j);

json to_json(const CharacteristicReport& r, int d);
json to_json(const ReducingPair& r, int d);
json to_json(const CubeSup& s, int d);
json to_json(const BmoW& r, int d);
json to_json(const PrimeFormsReport& r);
json to_json(const TraceCheck& r);
json to_json(const CarlesonNorm& r, int d);
json to_json(const EmbeddingReport& r);
json to_json(const StoppingTree& t);
json to_json(const PiBadEstimate& e);
json to_json(const T1Result& r, bool coefficients);
json to_json(const KernelCheckReport& r, int d);
json to_json(const CompatReport& r, int d);
json to_json(const WbpReport& r, int d);
json to_json(const DecayReport& r, int d);
json to_json(const NormProbe& p);

// j, packing, bound 2^{-j}, cubes
std::string packing_csv(const StoppingTree& t);
// gap, dist, max_ratio, pairs, I and J as level/coords
std::string decay_csv(const DecayReport& r, int d);

// write-temp-then-rename
void write_atomic(const std::string& path, const std::string& text);

}  // namespace mwdha
