// Copyright 2026 The lagdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace lagdyna {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input vector or matrix has the wrong dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise inadmissible numeric input.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated (empty batch, zero passes, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The velocity Hessian of the Lagrangian could not be inverted reliably.
class SingularDynamicsError : public Error {
 public:
  SingularDynamicsError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Non-finite intermediate inside an integrator step.
class IntegrationBlowup : public Error {
 public:
  IntegrationBlowup(const std::string& what, std::string stage)
      : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Optimizer produced or was fed non-finite values.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

/// Kalman innovation covariance too badly conditioned to invert.
class IllConditionedUpdate : public Error {
 public:
  IllConditionedUpdate(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Filtering left nothing to learn from.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace lagdyna
