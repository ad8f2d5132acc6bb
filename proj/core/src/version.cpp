#include "cdm/version.hpp"

namespace cdm {

const char* version() { return CDM_VERSION; }

}  // namespace cdm
