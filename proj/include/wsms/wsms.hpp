#pragma once

#include "wsms/catalog.hpp"
#include "wsms/costmodel.hpp"
#include "wsms/error.hpp"
#include "wsms/executor.hpp"
#include "wsms/generator.hpp"
#include "wsms/plan.hpp"
#include "wsms/planner.hpp"
#include "wsms/relation.hpp"
#include "wsms/rules.hpp"
#include "wsms/simfabric.hpp"
#include "wsms/sqlfront.hpp"
