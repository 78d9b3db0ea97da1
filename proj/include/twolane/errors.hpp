/**
 * Copyright 2026, The twolane Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"); you may not
 * use this file except in compliance with the License. You may obtain a copy of
 * the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
 * WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
 * License for the specific language governing permissions and limitations under
 * the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace twolane {

/// Base class of every error raised by the library. The CLI maps subclasses
/// deriving from ConfigError to exit code 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A required field is missing or has the wrong JSON type.
class MalformedConfig : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// The declared graph violates a topology invariant; the message names it.
class InconsistentGraph : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnknownLane : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A controller produced green times outside the box or off the cycle.
class InfeasibleControl : public Error {
 public:
  using Error::Error;
};

/// 4 u_min + Q > S or 4 u_max + Q < S.
class InfeasibleBox : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class Divergence : public Error {
 public:
  using Error::Error;
};

class MissingMessage : public Error {
 public:
  using Error::Error;
};

class MissingNeighborTrajectory : public Error {
 public:
  using Error::Error;
};

class EmptyRun : public Error {
 public:
  using Error::Error;
};

class MismatchedScenario : public Error {
 public:
  using Error::Error;
};

}  // namespace twolane
