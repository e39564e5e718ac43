"""SPW1 weight files.

``b'SPW1'``, u16 version, u32 header length, a JSON header (graph description,
array manifest, producing config), the arrays as little-endian bytes in
manifest order, and a trailing CRC32.
"""
import json
import logging
import struct
import zlib

import numpy as np

from sparsepose.errors import ChecksumError, ConfigError, DataError

logger = logging.getLogger(__name__)

MAGIC = b'SPW1'
VERSION = 1
PREAMBLE = struct.Struct('<4sHI')
CRC = struct.Struct('<I')

def _manifest(graph):
    entries = []
    for layer in graph.layers:
        params = graph.params.get(layer.name)
        if params is None:
            continue
        for key, array in params.arrays().items():
            entries.append({'layer': layer.name, 'key': key, 'shape': list(array.shape),
                            'dtype': np.dtype(array.dtype).newbyteorder('<').str})
    return entries

def encode_weights(graph, config=None):
    entries = _manifest(graph)
    header = json.dumps({'graph': graph.describe(), 'arrays': entries, 'config': config or {}},
                        sort_keys=True, default=str).encode('utf-8')
    chunks = [PREAMBLE.pack(MAGIC, VERSION, len(header)), header]
    for entry in entries:
        array = graph.params[entry['layer']].arrays()[entry['key']]
        chunks.append(np.ascontiguousarray(array, dtype=entry['dtype']).tobytes())
    body = b''.join(chunks)
    return body + CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)

def _split(data):
    if len(data) < PREAMBLE.size + CRC.size:
        raise DataError(f"Weight data too short ({len(data)} bytes)")
    body, (stored,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise ChecksumError("Weight file checksum mismatch")
    magic, version, header_len = PREAMBLE.unpack_from(body, 0)
    if magic != MAGIC or version != VERSION:
        raise DataError(f"Not an SPW{VERSION} weight file (magic {magic!r}, version {version})")
    try:
        header = json.loads(body[PREAMBLE.size:PREAMBLE.size + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"Weight header is not valid JSON: {e}")
    return header, body, PREAMBLE.size + header_len

def read_weights_header(path):
    """Graph description and config stored in a weight file"""
    with open(path, 'rb') as f:
        header, _, _ = _split(f.read())
    return header

def decode_weights(graph, data):
    """
    Load weights into a graph in place

    Every array is read and checked before any is written, so a rejected file
    leaves the graph as it was.

    Raises:
        DataError: Truncated file or trailing bytes
        ConfigError: The file was written for another backbone, input modality or layer inventory
    """
    header, body, offset = _split(data)
    stored = header['graph']
    expected = json.loads(json.dumps(graph.describe(), sort_keys=True, default=str))
    for key in ('backbone', 'input_channels', 'num_joints', 'layers'):
        if stored.get(key) != expected[key]:
            raise ConfigError(f"Weight file does not match the model: '{key}' differs "
                              f"(file backbone {stored.get('backbone', {}).get('name')}, "
                              f"model backbone {graph.spec.name})")

    entries = _manifest(graph)
    if [(e['layer'], e['key'], e['shape']) for e in entries] != \
            [(e['layer'], e['key'], e['shape']) for e in header['arrays']]:
        raise ConfigError("Weight file array inventory does not match the model")
    staged = []
    for entry, stored_entry in zip(entries, header['arrays']):
        dtype = np.dtype(stored_entry['dtype'])
        count = int(np.prod(entry['shape'], dtype=np.int64))
        end = offset + count * dtype.itemsize
        if end > len(body):
            raise DataError(f"Weight file truncated in {entry['layer']}.{entry['key']}")
        staged.append((entry, np.frombuffer(body, dtype=dtype, count=count, offset=offset).reshape(entry['shape'])))
        offset = end
    if offset != len(body):
        raise DataError(f"{len(body) - offset} trailing bytes in weight file")
    for entry, array in staged:
        graph.params[entry['layer']].arrays()[entry['key']][...] = array
    return header.get('config', {})

def write_weights(graph, path, config=None):
    data = encode_weights(graph, config=config)
    with open(path, 'wb') as f:
        f.write(data)
    logger.info(f"Wrote {graph.parameter_count()} parameters of {graph.spec.name} to {path}")

def read_weights(graph, path):
    with open(path, 'rb') as f:
        config = decode_weights(graph, f.read())
    logger.info(f"Loaded weights for {graph.spec.name} from {path}")
    return config
