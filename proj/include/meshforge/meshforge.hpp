#pragma once

#include "asset.hpp"
#include "backend_server.hpp"
#include "codec.hpp"
#include "common.hpp"
#include "config.hpp"
#include "control.hpp"
#include "distance.hpp"
#include "field.hpp"
#include "gateway.hpp"
#include "http_api.hpp"
#include "image.hpp"
#include "mesh.hpp"
#include "mock.hpp"
#include "pipeline.hpp"
#include "service.hpp"
#include "session.hpp"
#include "sketch.hpp"
#include "triplane.hpp"
#include "wire.hpp"
