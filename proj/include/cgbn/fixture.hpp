#pragma once

#include "cgbn/decision.hpp"
#include "cgbn/model.hpp"

namespace cgbn {

/// The soil-sorting reference network: waste composition WC drives seven
/// characteristics, which drive container leakage L, mobility M and form F;
/// these feed the batch assay (ACD, AMD) and the per-sample contamination
/// SCD, measured density SMD and gamma sensor SS. Continuous quantities are
/// in log-contamination units. Parameters are constructed so that waste types
/// with high contamination give low sensor readings.
Network reference_network();

/// Batch assay observation used by the examples and acceptance checks.
Evidence reference_slow_evidence(const Network& net);

/// c_hat = 2, lambda0 = 1, lambda1 = 10.
Policy reference_policy();

inline constexpr const char* kReferenceSensor = "SS";
inline constexpr const char* kReferenceTarget = "SCD";
inline constexpr const char* kReferenceAssay = "ACD";

}  // namespace cgbn
