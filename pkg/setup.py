#!/usr/bin/python3
from setuptools import setup

from kinemalab import __version__

setup(name='kinemalab',
      version=__version__,
      description='Integral geometry experiments on polytopes and DC functions',
      long_description='Curvature measures, kinematic formulas, Minkowski content estimates and '
                       'weak regularity certificates for polytopes, polyconvex sets and '
                       'differences of max-affine functions.',
      packages=['kinemalab'],
      package_dir={'kinemalab': 'kinemalab'},
      scripts=['src/kinemalab'],
      install_requires=['numpy>=1.20', 'scipy>=1.7', 'psutil>=5.6.1'],
      extras_require={'test': ['pytest']},
      python_requires='>=3.8',
      classifiers=['Development Status :: 3 - Alpha',
                   'Environment :: Console',
                   'Intended Audience :: Science/Research',
                   'License :: OSI Approved :: Apache Software License',
                   'Natural Language :: English',
                   'Operating System :: POSIX :: Linux',
                   'Programming Language :: Python :: 3',
                   'Topic :: Scientific/Engineering :: Mathematics',
                   ],
      platforms='POSIX',
      license='Apache License 2.0',
      )
