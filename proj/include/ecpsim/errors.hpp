#pragma once

#include <stdexcept>
#include <string>

namespace ecpsim {

struct NonUnitQuaternion : std::runtime_error {
  explicit NonUnitQuaternion(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroNormal : std::runtime_error {
  explicit ZeroNormal(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateNormal : std::runtime_error {
  explicit DegenerateNormal(const std::string& what) : std::runtime_error(what) {}
};

struct NotOnBoundary : std::runtime_error {
  explicit NotOnBoundary(const std::string& what) : std::runtime_error(what) {}
};

struct SingularSystem : std::runtime_error {
  explicit SingularSystem(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NoContact : std::runtime_error {
  explicit NoContact(const std::string& what) : std::runtime_error(what) {}
};

struct SingularD : std::runtime_error {
  explicit SingularD(const std::string& what) : std::runtime_error(what) {}
};

struct StickingRegime : std::runtime_error {
  explicit StickingRegime(const std::string& what) : std::runtime_error(what) {}
};

struct IncompatibleImpulse : std::runtime_error {
  explicit IncompatibleImpulse(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ecpsim
